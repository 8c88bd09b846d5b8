#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfc/encoding.hpp"
#include "nfc/errors.hpp"
#include "nfc/random.hpp"
#include "nfc/tensor.hpp"

namespace nfc {

enum class HeadType { regressor3, classifier24 };

inline std::string head_name(HeadType h) { return h == HeadType::regressor3 ? "regressor3" : "classifier24"; }
inline HeadType head_from_name(const std::string& s) {
    if (s == "regressor3") return HeadType::regressor3;
    if (s == "classifier24") return HeadType::classifier24;
    throw ConfigError("unknown head type '" + s + "'");
}

// Coordinate-MLP architecture. The trunk is shared between head types; the
// classifier head simply enlarges the final layer from 3 to 24 logits.
struct MlpSpec {
    int pos_dim = 2;  // 2 for image fields, 3 for radiance fields
    PosEncConfig pos_enc{10, true};
    PosEncConfig dir_enc{4, true};
    bool use_direction = false;
    bool density_branch = false;
    std::vector<int> hidden{128, 128, 128, 128};
    HeadType head = HeadType::regressor3;

    int head_logits() const { return head == HeadType::classifier24 ? 24 : 3; }
    int pos_in_dim() const { return pos_enc.out_dim(pos_dim); }
    int dir_in_dim() const { return dir_enc.out_dim(3); }
    // Width of the single post-direction color layer (standard NeRF halves
    // the trunk width here).
    int color_hidden() const { return std::max(hidden.back() / 2, 8); }

    void validate() const {
        if (pos_dim != 2 && pos_dim != 3) throw ConfigError("pos_dim must be 2 or 3");
        if (hidden.empty()) throw ConfigError("at least one hidden layer required");
        for (int h : hidden)
            if (h <= 0) throw ConfigError("hidden widths must be positive");
        if (use_direction && !density_branch)
            throw ConfigError("direction conditioning requires the density branch (radiance fields)");
        if (pos_enc.frequencies < 0 || dir_enc.frequencies < 0)
            throw ConfigError("encoding frequency count must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"pos_dim", pos_dim},
                {"pos_enc", {{"frequencies", pos_enc.frequencies}, {"include_input", pos_enc.include_input}}},
                {"dir_enc", {{"frequencies", dir_enc.frequencies}, {"include_input", dir_enc.include_input}}},
                {"use_direction", use_direction},
                {"density_branch", density_branch},
                {"hidden", hidden},
                {"head", head_name(head)}};
    }
    static MlpSpec from_json(const nlohmann::json& j) {
        MlpSpec s;
        s.pos_dim = j.at("pos_dim").get<int>();
        s.pos_enc.frequencies = j.at("pos_enc").at("frequencies").get<int>();
        s.pos_enc.include_input = j.at("pos_enc").at("include_input").get<bool>();
        s.dir_enc.frequencies = j.at("dir_enc").at("frequencies").get<int>();
        s.dir_enc.include_input = j.at("dir_enc").at("include_input").get<bool>();
        s.use_direction = j.at("use_direction").get<bool>();
        s.density_branch = j.at("density_branch").get<bool>();
        s.hidden = j.at("hidden").get<std::vector<int>>();
        s.head = head_from_name(j.at("head").get<std::string>());
        s.validate();
        return s;
    }
};

struct ParamInfo {
    int rows, cols;
    bool is_bias;
    std::string name;
};

// Parameter declaration order; fixes checkpoint layout and init sequence.
inline std::vector<ParamInfo> param_plan(const MlpSpec& spec) {
    std::vector<ParamInfo> plan;
    int in = spec.pos_in_dim();
    for (size_t i = 0; i < spec.hidden.size(); ++i) {
        plan.push_back({in, spec.hidden[i], false, "trunk" + std::to_string(i) + ".w"});
        plan.push_back({1, spec.hidden[i], true, "trunk" + std::to_string(i) + ".b"});
        in = spec.hidden[i];
    }
    if (spec.density_branch) {
        plan.push_back({in, 1, false, "sigma.w"});
        plan.push_back({1, 1, true, "sigma.b"});
    }
    int head_in = in;
    if (spec.use_direction) {
        plan.push_back({in + spec.dir_in_dim(), spec.color_hidden(), false, "color.w"});
        plan.push_back({1, spec.color_hidden(), true, "color.b"});
        head_in = spec.color_hidden();
    }
    plan.push_back({head_in, spec.head_logits(), false, "head.w"});
    plan.push_back({1, spec.head_logits(), true, "head.b"});
    return plan;
}

struct FieldModel {
    MlpSpec spec;
    uint64_t seed = 0;
    long iteration = 0;
    std::vector<Tensor> params;  // aligned with param_plan(spec)

    long param_count() const {
        long n = 0;
        for (const Tensor& p : params) n += p.numel();
        return n;
    }
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic in the seed.
inline FieldModel init_model(const MlpSpec& spec, uint64_t seed) {
    spec.validate();
    FieldModel m;
    m.spec = spec;
    m.seed = seed;
    Rng rng(seed, /*stream=*/0x1417u);
    for (const ParamInfo& info : param_plan(spec)) {
        Tensor t = Tensor::zeros({info.rows, info.cols});
        if (!info.is_bias) {
            double bound = std::sqrt(6.0 / (info.rows + info.cols));
            for (double& v : t.data) v = rng.uniform(-bound, bound);
        }
        m.params.push_back(std::move(t));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Plain (non-tape) forward evaluation. Used for rendering and metrics, where
// no gradients are needed; read-only on the model, safe to call in parallel.

struct FieldEval {
    RowMat colors;          // N x 3, in (0,1)
    RowMat bits;            // N x 24 (classifier head only)
    Eigen::VectorXd sigma;  // N (density branch only)
};

namespace detail {

inline void relu_inplace(RowMat& m) { m = m.cwiseMax(0.0); }
inline void sigmoid_inplace(RowMat& m) {
    for (int i = 0; i < m.size(); ++i) m.data()[i] = Tape::stable_sigmoid(m.data()[i]);
}

// enc_pos: [N, pos_in_dim]; enc_dir: [N, dir_in_dim] or empty.
inline FieldEval forward_plain(const FieldModel& model, const RowMat& enc_pos, const RowMat& enc_dir) {
    const MlpSpec& spec = model.spec;
    size_t k = 0;
    auto next = [&]() -> const Tensor& { return model.params[k++]; };
    RowMat h = enc_pos;
    for (size_t i = 0; i < spec.hidden.size(); ++i) {
        const Tensor& w = next();
        const Tensor& b = next();
        RowMat z = h * w.mat();
        z.rowwise() += Eigen::RowVectorXd::Map(b.data.data(), b.numel());
        relu_inplace(z);
        h = std::move(z);
    }
    FieldEval out;
    if (spec.density_branch) {
        const Tensor& w = next();
        const Tensor& b = next();
        Eigen::VectorXd raw = (h * w.mat()).col(0).array() + b.data[0];
        out.sigma.resize(raw.size());
        for (int i = 0; i < raw.size(); ++i) out.sigma[i] = Tape::stable_softplus(raw[i]);
    }
    if (spec.use_direction) {
        const Tensor& w = next();
        const Tensor& b = next();
        RowMat cat(h.rows(), h.cols() + enc_dir.cols());
        cat << h, enc_dir;
        RowMat z = cat * w.mat();
        z.rowwise() += Eigen::RowVectorXd::Map(b.data.data(), b.numel());
        relu_inplace(z);
        h = std::move(z);
    }
    const Tensor& w = next();
    const Tensor& b = next();
    RowMat logits = h * w.mat();
    logits.rowwise() += Eigen::RowVectorXd::Map(b.data.data(), b.numel());
    sigmoid_inplace(logits);
    if (spec.head == HeadType::classifier24) {
        out.bits = std::move(logits);
        out.colors.resize(out.bits.rows(), 3);
        decode_bits_plain(std::span<const double>(out.bits.data(), out.bits.size()),
                          std::span<double>(out.colors.data(), out.colors.size()));
    } else {
        out.colors = std::move(logits);
    }
    return out;
}

inline RowMat encode_points(std::span<const double> pts, int dim, const PosEncConfig& cfg) {
    Tensor t = positional_encode_batch(pts, dim, cfg);
    return ConstMatMap(t.data.data(), t.rows(), t.cols());
}

}  // namespace detail

// coords: N points in [0,1]^2, row-major.
inline FieldEval eval_image_field(const FieldModel& model, std::span<const double> coords) {
    if (model.spec.pos_dim != 2 || model.spec.density_branch)
        throw ConfigError("eval_image_field requires a 2D image-field model");
    RowMat enc = detail::encode_points(coords, 2, model.spec.pos_enc);
    return detail::forward_plain(model, enc, RowMat());
}

// positions: N 3D points; directions: N unit vectors (|d| within 1e-6 of 1).
inline FieldEval eval_radiance_field(const FieldModel& model, std::span<const double> positions,
                                     std::span<const double> directions) {
    if (model.spec.pos_dim != 3 || !model.spec.density_branch)
        throw ConfigError("eval_radiance_field requires a 3D radiance-field model");
    RowMat enc_pos = detail::encode_points(positions, 3, model.spec.pos_enc);
    RowMat enc_dir;
    if (model.spec.use_direction) {
        const size_t n = directions.size() / 3;
        for (size_t i = 0; i < n; ++i) {
            double nx = directions[i * 3], ny = directions[i * 3 + 1], nz = directions[i * 3 + 2];
            double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (std::abs(norm - 1.0) > 1e-6)
                throw DomainError("direction " + std::to_string(i) + " is not unit-norm (|d|=" +
                                  std::to_string(norm) + ")");
        }
        enc_dir = detail::encode_points(directions, 3, model.spec.dir_enc);
    }
    return detail::forward_plain(model, enc_pos, enc_dir);
}

// ---------------------------------------------------------------------------
// Tape forward for training. Parameters enter the graph as leaves so their
// gradients can be read back after backward().

struct TapeField {
    std::vector<Value> param_leaves;  // aligned with model.params
    Value sigma;                      // [N,1] softplus density (density branch)
    Value bits;                       // [N,24] sigmoid bit probabilities (classifier)
    Value colors;                     // [N,3] sigmoid or decoded colors
};

inline TapeField forward_tape(Tape& t, const FieldModel& model, const Tensor& enc_pos, const Tensor* enc_dir) {
    const MlpSpec& spec = model.spec;
    TapeField out;
    out.param_leaves.reserve(model.params.size());
    for (const Tensor& p : model.params) out.param_leaves.push_back(t.leaf(p));
    size_t k = 0;
    auto next = [&]() -> Value { return out.param_leaves[k++]; };
    Value h = t.leaf(enc_pos);
    for (size_t i = 0; i < spec.hidden.size(); ++i) {
        Value w = next(), b = next();
        h = t.relu(t.add(t.matmul(h, w), b));
    }
    if (spec.density_branch) {
        Value w = next(), b = next();
        out.sigma = t.softplus(t.add(t.matmul(h, w), b));
    }
    if (spec.use_direction) {
        Value w = next(), b = next();
        Value cat = t.concat_cols(h, t.leaf(*enc_dir));
        h = t.relu(t.add(t.matmul(cat, w), b));
    }
    Value w = next(), b = next();
    Value act = t.sigmoid(t.add(t.matmul(h, w), b));
    if (spec.head == HeadType::classifier24) {
        out.bits = act;
        out.colors = t.matmul(act, t.leaf(bit_decode_matrix()));
    } else {
        out.colors = act;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: one-line JSON header (spec, seed, iteration, param count),
// newline, then the parameters as a little-endian float64 blob in
// declaration order.

inline void save_checkpoint(const FieldModel& model, const std::string& path) {
    nlohmann::json header = {{"format", "nfc-checkpoint-v1"},
                             {"spec", model.spec.to_json()},
                             {"seed", model.seed},
                             {"iteration", model.iteration},
                             {"param_count", model.param_count()}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for write: " + path);
    f << header.dump() << "\n";
    for (const Tensor& p : model.params)
        f.write(reinterpret_cast<const char*>(p.data.data()),
                static_cast<std::streamsize>(p.data.size() * sizeof(double)));
    if (!f) throw IoError("checkpoint write failed: " + path);
}

inline FieldModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for read: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError("missing checkpoint header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }
    if (header.value("format", "") != "nfc-checkpoint-v1")
        throw IoError("unsupported checkpoint format in " + path);
    FieldModel m;
    try {
        m.spec = MlpSpec::from_json(header.at("spec"));
        m.seed = header.at("seed").get<uint64_t>();
        m.iteration = header.at("iteration").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }
    long expect = header.at("param_count").get<long>();
    long total = 0;
    for (const ParamInfo& info : param_plan(m.spec)) {
        Tensor t = Tensor::zeros({info.rows, info.cols});
        f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (f.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(double)))
            throw IoError("truncated checkpoint blob: " + path);
        total += t.numel();
        m.params.push_back(std::move(t));
    }
    if (total != expect)
        throw IoError("checkpoint param count mismatch in " + path + ": header says " + std::to_string(expect) +
                      ", layout has " + std::to_string(total));
    return m;
}

}  // namespace nfc
