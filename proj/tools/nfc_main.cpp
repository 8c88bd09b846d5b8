// Command-line front end: fit / compare / sweep-lambda / make-data / render.
// Exit codes: 0 success, 2 config error, 3 numerical abort, 4 I/O error.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "nfc/experiment.hpp"

namespace {

int dispatch(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const nfc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nfc::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const nfc::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural-field trainer: regression (NFR) and classification (NFC) objectives"};
    app.require_subcommand(1);

    std::string config_path, spec_path, ckpt_path, camera_path, out_path, out_dir;
    std::vector<double> lambdas{0.1, 1.0, 10.0, 100.0};
    int n_samples = 0;

    CLI::App* fit = app.add_subcommand("fit", "Train one model and write logs/checkpoint/metrics");
    fit->add_option("config", config_path, "experiment config JSON")->required();

    CLI::App* compare = app.add_subcommand("compare", "Run NFR and NFC on identical data/seed");
    compare->add_option("config", config_path, "experiment config JSON")->required();

    CLI::App* sweep = app.add_subcommand("sweep-lambda", "NFC runs across lambda values plus an NFR baseline");
    sweep->add_option("config", config_path, "experiment config JSON")->required();
    sweep->add_option("--lambdas", lambdas, "lambda values")->delimiter(',');

    CLI::App* make_data = app.add_subcommand("make-data", "Materialize a dataset directory from a spec");
    make_data->add_option("spec", spec_path, "dataset spec JSON")->required();
    make_data->add_option("--output-dir", out_dir, "override output directory");

    CLI::App* render = app.add_subcommand("render", "Render a checkpoint from a camera file");
    render->add_option("checkpoint", ckpt_path, "model checkpoint")->required();
    render->add_option("camera", camera_path, "camera JSON")->required();
    render->add_option("--out", out_path, "output PPM path")->default_val("render.ppm");
    render->add_option("--samples", n_samples, "samples per ray override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (fit->parsed())
        return dispatch([&] { nfc::run_fit(nfc::ExperimentConfig::load(config_path)); });
    if (compare->parsed())
        return dispatch([&] { nfc::run_compare(nfc::ExperimentConfig::load(config_path)); });
    if (sweep->parsed())
        return dispatch([&] { nfc::run_sweep_lambda(nfc::ExperimentConfig::load(config_path), lambdas); });
    if (make_data->parsed())
        return dispatch([&] { nfc::run_make_data(nfc::read_json_file(spec_path), out_dir); });
    if (render->parsed())
        return dispatch([&] { nfc::run_render(ckpt_path, camera_path, out_path, n_samples); });
    return 2;
}
