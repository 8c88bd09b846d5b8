#include <catch_amalgamated.hpp>
#include <cmath>

#include "nfc/random.hpp"
#include "nfc/tensor.hpp"

using namespace nfc;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("forward primitives match their definitions") {
    Tape t;
    SECTION("sigmoid(0) = 0.5") {
        Value v = t.sigmoid(t.scalar(0.0));
        REQUIRE(v.scalar_value() == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("matmul by identity is identity") {
        Tensor eye({2, 2}, {1, 0, 0, 1});
        Tensor a({2, 2}, {3.0, -1.5, 2.25, 0.75});
        Value out = t.matmul(t.leaf(eye), t.leaf(a));
        for (int i = 0; i < 4; ++i) REQUIRE(out.val().data[i] == a.data[i]);
    }
    SECTION("clamp_upper realizes min(x, b)") {
        Value a = t.clamp_upper(t.scalar(1.2), 0.999);
        Value b = t.clamp_upper(t.scalar(0.4), 0.999);
        REQUIRE(a.scalar_value() == 0.999);
        REQUIRE(b.scalar_value() == 0.4);
    }
    SECTION("clamp_lower realizes max(x, a)") {
        REQUIRE(t.clamp_lower(t.scalar(-0.5), 0.0).scalar_value() == 0.0);
        REQUIRE(t.clamp_lower(t.scalar(0.5), 0.0).scalar_value() == 0.5);
    }
    SECTION("softplus is positive and asymptotically linear") {
        REQUIRE(t.softplus(t.scalar(0.0)).scalar_value() == Catch::Approx(std::log(2.0)));
        REQUIRE(t.softplus(t.scalar(40.0)).scalar_value() == Catch::Approx(40.0).margin(1e-12));
        REQUIRE(t.softplus(t.scalar(-40.0)).scalar_value() > 0.0);
    }
    SECTION("broadcast row and column") {
        Tensor row({1, 3}, {1, 2, 3});
        Value b = t.broadcast(t.leaf(row), {2, 3});
        REQUIRE(b.val().data == std::vector<double>{1, 2, 3, 1, 2, 3});
        Tensor col({2, 1}, {5, 7});
        Value c = t.broadcast(t.leaf(col), {2, 2});
        REQUIRE(c.val().data == std::vector<double>{5, 5, 7, 7});
    }
    SECTION("concat and slice are inverse") {
        Tensor a({2, 2}, {1, 2, 3, 4});
        Tensor b({2, 1}, {9, 8});
        Value cat = t.concat_cols(t.leaf(a), t.leaf(b));
        REQUIRE(cat.val().data == std::vector<double>{1, 2, 9, 3, 4, 8});
        Value sl = t.slice_cols(cat, 2, 3);
        REQUIRE(sl.val().data == std::vector<double>{9, 8});
    }
    SECTION("cumsum_exclusive") {
        Tensor a({1, 4}, {1, 2, 3, 4});
        Value c = t.cumsum_exclusive(t.leaf(a));
        REQUIRE(c.val().data == std::vector<double>{0, 1, 3, 6});
    }
    SECTION("sum_groups adds consecutive rows") {
        Tensor a({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
        Value s = t.sum_groups(t.leaf(a), 2);
        REQUIRE(s.val().data == std::vector<double>{4, 6, 12, 14});
    }
}

TEST_CASE("shape errors name both shapes") {
    Tape t;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    REQUIRE_THROWS_AS(t.matmul(t.leaf(a), t.leaf(b)), ShapeError);
    REQUIRE_THROWS_WITH(t.matmul(t.leaf(a), t.leaf(b)),
                        Catch::Matchers::ContainsSubstring("[2,3]") && Catch::Matchers::ContainsSubstring("x"));
    Tensor c = Tensor::zeros({3, 2});
    REQUIRE_THROWS_AS(t.add(t.leaf(a), t.leaf(c)), ShapeError);
}

TEST_CASE("log rejects non-positive input") {
    Tape t;
    Tensor a({1, 2}, {0.5, -0.25});
    REQUIRE_THROWS_AS(t.log(t.leaf(a)), DomainError);
}

TEST_CASE("backward basics") {
    SECTION("d(x^2)/dx = 2x at x=3") {
        Tape t;
        Value x = t.scalar(3.0);
        Value loss = t.mul(x, x);
        auto grads = t.backward(loss);
        REQUIRE(grads[x.id()].data[0] == Catch::Approx(6.0));
    }
    SECTION("active clamp_upper kills the gradient") {
        Tape t;
        Value x = t.scalar(1.2);
        Value loss = t.clamp_upper(x, 0.999);
        auto grads = t.backward(loss);
        REQUIRE(grads[x.id()].data[0] == 0.0);
    }
    SECTION("tie at the clamp bound counts as active") {
        Tape t;
        Value x = t.scalar(0.999);
        auto grads = t.backward(t.clamp_upper(x, 0.999));
        REQUIRE(grads[x.id()].data[0] == 0.0);
    }
    SECTION("sigmoid'(0) = 0.25, matching central differences") {
        Tape t;
        Value x = t.scalar(0.0);
        auto grads = t.backward(t.sigmoid(x));
        REQUIRE(grads[x.id()].data[0] == Catch::Approx(0.25).margin(1e-12));
        const double h = 1e-6;
        double fd = (Tape::stable_sigmoid(h) - Tape::stable_sigmoid(-h)) / (2 * h);
        REQUIRE(grads[x.id()].data[0] == Catch::Approx(fd).margin(1e-9));
    }
    SECTION("backward requires scalar loss") {
        Tape t;
        Value x = t.leaf(Tensor::zeros({2, 2}));
        REQUIRE_THROWS_AS(t.backward(x), ShapeError);
    }
}

TEST_CASE("grad_check oracle on simple functions") {
    SECTION("sum of sigmoid") {
        Rng rng(7);
        std::vector<Tensor> pts = {random_tensor({3, 4}, rng, -2.0, 2.0)};
        double err = grad_check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.sigmoid(v[0])); }, pts);
        REQUIRE(err < 1e-6);
    }
    SECTION("constant function has zero error") {
        std::vector<Tensor> pts = {Tensor::scalar(1.5)};
        double err = grad_check(
            [](Tape& t, const std::vector<Value>& v) { return t.add(t.scale(v[0], 0.0), t.scalar(2.0)); }, pts);
        REQUIRE(err == 0.0);
    }
}

TEST_CASE("every primitive passes gradient checks at random interior points") {
    // 100 random points per primitive family, rel. error < 1e-5.
    Rng rng(42);
    auto check = [&](auto fn, std::vector<std::vector<int>> shapes, double lo, double hi) {
        for (int rep = 0; rep < 100; ++rep) {
            std::vector<Tensor> pts;
            for (auto& s : shapes) pts.push_back(random_tensor(s, rng, lo, hi));
            REQUIRE(grad_check(fn, pts) < 1e-5);
        }
    };

    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.matmul(v[0], v[1])); },
          {{2, 3}, {3, 2}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.add(v[0], v[1]), v[0])); },
          {{2, 3}, {2, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.relu(v[0])); }, {{3, 3}}, 0.1, 1.0);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.sigmoid(v[0])); }, {{3, 3}}, -2, 2);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.softplus(v[0])); }, {{3, 3}}, -2, 2);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.exp(v[0])); }, {{3, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.log(v[0])); }, {{3, 3}}, 0.2, 2.0);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.neg(v[0])); }, {{3, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.mean(v[0]); }, {{4, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.row_sum(v[0])); }, {{3, 4}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.broadcast(v[0], {4, 3}), t.broadcast(v[1], {4, 3}))); },
          {{1, 3}, {4, 1}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.concat_cols(v[0], v[1]), t.concat_cols(v[1], v[0]))); },
          {{3, 2}, {3, 2}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.slice_cols(v[0], 1, 3), t.slice_cols(v[0], 0, 2))); },
          {{3, 4}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.reshape(v[0], {2, 6}), t.reshape(v[1], {2, 6}))); },
          {{3, 4}, {4, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.clamp_upper(v[0], 0.35)); }, {{3, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.clamp_lower(v[0], -0.35)); }, {{3, 3}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.cumsum_exclusive(v[0]), v[0])); },
          {{2, 5}}, -1, 1);
    check([](Tape& t, const std::vector<Value>& v) { return t.sum(t.mul(t.sum_groups(v[0], 2), v[1])); },
          {{6, 3}, {3, 3}}, -1, 1);
}

TEST_CASE("backward of a sum of losses equals the sum of backwards") {
    Rng rng(11);
    Tensor p = random_tensor({3, 3}, rng);

    auto loss_a = [](Tape& t, Value x) { return t.sum(t.sigmoid(x)); };
    auto loss_b = [](Tape& t, Value x) { return t.mean(t.mul(x, x)); };

    Tape t1;
    Value x1 = t1.leaf(p);
    auto g1 = t1.backward(t1.add(loss_a(t1, x1), loss_b(t1, x1)));

    Tape t2;
    Value x2 = t2.leaf(p);
    auto ga = t2.backward(loss_a(t2, x2));
    Tape t3;
    Value x3 = t3.leaf(p);
    auto gb = t3.backward(loss_b(t3, x3));

    for (size_t i = 0; i < p.data.size(); ++i)
        REQUIRE(g1[x1.id()].data[i] ==
                Catch::Approx(ga[x2.id()].data[i] + gb[x3.id()].data[i]).margin(1e-14));
}

TEST_CASE("forward+backward twice is bit-identical") {
    Rng rng(3);
    Tensor w = random_tensor({4, 4}, rng);
    Tensor x = random_tensor({2, 4}, rng);
    auto run = [&]() {
        Tape t;
        Value wx = t.matmul(t.leaf(x), t.leaf(w));
        Value loss = t.sum(t.sigmoid(wx));
        auto grads = t.backward(loss);
        return std::pair{loss.scalar_value(), grads[1].data};
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    REQUIRE(l1 == l2);
    REQUIRE(g1 == g2);
}
