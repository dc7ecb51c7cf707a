#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "fairpipe/errors.hpp"
#include "fairpipe/param_store.hpp"
#include "fairpipe/rng.hpp"
#include "fairpipe/tape.hpp"

using namespace fairpipe;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -3.0,
                     double hi = 3.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Central finite-difference oracle: rebuilds the graph at perturbed inputs
// and compares (f(x+h) - f(x-h)) / 2h against the analytic gradients.
using GraphBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

void check_gradients(std::vector<Tensor> inputs, const GraphBuilder& build, double tol = 1e-5,
                     double h = 1e-5) {
    auto evaluate = [&](const std::vector<Tensor>& values, std::vector<Tensor>* grads) {
        Tape tape;
        std::vector<NodeId> nodes;
        nodes.reserve(values.size());
        for (const auto& v : values) nodes.push_back(tape.input(v));
        const NodeId loss = build(tape, nodes);
        REQUIRE(tape.value(loss).numel() == 1);
        const double out = tape.value(loss).data[0];
        if (grads != nullptr) {
            tape.backward(loss);
            grads->clear();
            for (const NodeId n : nodes) grads->push_back(tape.grad(n));
        }
        return out;
    };

    std::vector<Tensor> analytic;
    evaluate(inputs, &analytic);

    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].numel(); ++i) {
            const double keep = inputs[t].data[i];
            inputs[t].data[i] = keep + h;
            const double fp = evaluate(inputs, nullptr);
            inputs[t].data[i] = keep - h;
            const double fm = evaluate(inputs, nullptr);
            inputs[t].data[i] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[t].data[i];
            const double err =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            INFO("input ", t, " element ", i, " analytic ", a, " numeric ", numeric);
            CHECK(err <= tol);
        }
    }
}

}  // namespace

TEST_CASE("affine gradients agree with finite differences") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t in = 1 + rng.below(4);
        const std::size_t out = 1 + rng.below(4);
        std::vector<Tensor> inputs = {random_tensor({rows, in}, rng),
                                      random_tensor({in, out}, rng),
                                      random_tensor({out}, rng),
                                      random_tensor({rows, out}, rng)};
        check_gradients(std::move(inputs), [](Tape& t, const std::vector<NodeId>& n) {
            return t.rmse_loss(t.affine(n[0], n[1], n[2]), n[3]);
        });
    }
}

TEST_CASE("sigmoid gradients agree with finite differences") {
    Rng rng(102);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t cols = 1 + rng.below(5);
        std::vector<Tensor> inputs = {random_tensor({rows, cols}, rng),
                                      random_tensor({rows, cols}, rng)};
        check_gradients(std::move(inputs), [](Tape& t, const std::vector<NodeId>& n) {
            return t.rmse_loss(t.sigmoid(n[0]), n[1]);
        });
    }
}

TEST_CASE("softmax and cross-entropy gradients agree with finite differences") {
    Rng rng(103);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t cols = 2 + rng.below(3);
        std::vector<int> labels(rows);
        for (auto& l : labels) l = static_cast<int>(rng.below(cols));
        std::vector<Tensor> inputs = {random_tensor({rows, cols}, rng)};
        check_gradients(std::move(inputs), [labels](Tape& t, const std::vector<NodeId>& n) {
            return t.cross_entropy(t.softmax(n[0]), labels);
        });
    }
}

TEST_CASE("neg_entropy gradients agree with finite differences") {
    Rng rng(104);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t cols = 2 + rng.below(3);
        std::vector<Tensor> inputs = {random_tensor({rows, cols}, rng)};
        check_gradients(std::move(inputs), [](Tape& t, const std::vector<NodeId>& n) {
            return t.neg_entropy(t.softmax(n[0]));
        });
    }
}

TEST_CASE("concat gradients agree with finite differences") {
    Rng rng(105);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t ca = 1 + rng.below(4);
        const std::size_t cb = 1 + rng.below(4);
        std::vector<Tensor> inputs = {random_tensor({rows, ca}, rng),
                                      random_tensor({rows, cb}, rng),
                                      random_tensor({rows, ca + cb}, rng)};
        check_gradients(std::move(inputs), [](Tape& t, const std::vector<NodeId>& n) {
            return t.rmse_loss(t.concat(n[0], n[1]), n[2]);
        });
    }
}

TEST_CASE("mean_rows gradients agree with finite differences") {
    Rng rng(106);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 2 + rng.below(4);
        const std::size_t cols = 1 + rng.below(4);
        std::vector<std::uint8_t> mask(rows, 0);
        for (auto& m : mask) m = rng.uniform() < 0.6 ? 1 : 0;
        mask[rng.below(rows)] = 1;  // keep at least one row
        std::vector<Tensor> inputs = {random_tensor({rows, cols}, rng),
                                      random_tensor({cols}, rng)};
        check_gradients(std::move(inputs), [mask](Tape& t, const std::vector<NodeId>& n) {
            return t.rmse_loss(t.mean_rows(n[0], mask), n[1]);
        });
    }
}

TEST_CASE("dropout gradients agree with finite differences under a fixed mask") {
    Rng rng(107);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t cols = 1 + rng.below(5);
        const std::uint64_t mask_seed = rng.next_u64();
        std::vector<Tensor> inputs = {random_tensor({rows, cols}, rng),
                                      random_tensor({rows, cols}, rng)};
        check_gradients(std::move(inputs),
                        [mask_seed](Tape& t, const std::vector<NodeId>& n) {
                            Rng mask_rng(mask_seed);
                            return t.rmse_loss(t.dropout(n[0], 0.3, mask_rng, true), n[1]);
                        });
    }
}

TEST_CASE("mul and scale gradients agree with finite differences") {
    Rng rng(108);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(3);
        const std::size_t cols = 1 + rng.below(4);
        std::vector<Tensor> inputs = {random_tensor({rows, cols}, rng),
                                      random_tensor({rows, cols}, rng),
                                      random_tensor({rows, cols}, rng)};
        check_gradients(std::move(inputs), [](Tape& t, const std::vector<NodeId>& n) {
            return t.rmse_loss(t.add(t.mul(n[0], n[1]), t.scale(n[0], 0.7)), n[2]);
        });
    }
}

TEST_CASE("random three-layer networks pass the finite-difference check") {
    Rng rng(109);
    for (int trial = 0; trial < 3; ++trial) {
        const std::size_t batch = 2 + rng.below(3);
        const std::size_t d0 = 3 + rng.below(3);
        const std::size_t d1 = 2 + rng.below(3);
        const std::size_t d2 = 2 + rng.below(3);
        std::vector<Tensor> inputs = {
            random_tensor({batch, d0}, rng), random_tensor({d0, d1}, rng),
            random_tensor({d1}, rng),        random_tensor({d1, d2}, rng),
            random_tensor({d2}, rng),        random_tensor({d2, 1}, rng),
            random_tensor({1}, rng),         random_tensor({batch, 1}, rng, 0.0, 1.0)};
        check_gradients(std::move(inputs), [](Tape& t, const std::vector<NodeId>& n) {
            const NodeId h1 = t.sigmoid(t.affine(n[0], n[1], n[2]));
            const NodeId h2 = t.sigmoid(t.affine(h1, n[3], n[4]));
            const NodeId y = t.sigmoid(t.affine(h2, n[5], n[6]));
            return t.rmse_loss(y, n[7]);
        });
    }
}

TEST_CASE("primitive spot values") {
    Tape tape;
    const NodeId x = tape.input(Tensor({1}, {0.0}));
    const NodeId s = tape.sigmoid(x);
    CHECK(tape.value(s).data[0] == doctest::Approx(0.5).epsilon(1e-12));

    const NodeId logits = tape.input(Tensor({1, 2}, {0.7, 0.7}));
    const NodeId sm = tape.softmax(logits);
    CHECK(tape.value(sm).data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(tape.value(sm).data[1] == doctest::Approx(0.5).epsilon(1e-12));
    const NodeId ne = tape.neg_entropy(sm);
    CHECK(tape.value(ne).data[0] ==
          doctest::Approx(-std::numbers::ln2).epsilon(1e-12));

    const NodeId p = tape.input(Tensor({2, 2}, {0.3, 0.4, 0.1, 0.9}));
    const NodeId q = tape.input(Tensor({2, 2}, {0.3, 0.4, 0.1, 0.9}));
    const NodeId z = tape.rmse_loss(p, q);
    CHECK(tape.value(z).data[0] == 0.0);
}

TEST_CASE("sum of squares via node reuse accumulates the full gradient") {
    // loss = sum_i w_i^2 with w = (1, 2); expect grad (2, 4).
    Tape tape;
    const NodeId w = tape.input(Tensor({1, 2}, {1.0, 2.0}));
    const NodeId sq = tape.mul(w, w);
    const NodeId ones = tape.input(Tensor({2, 1}, {1.0, 1.0}));
    const NodeId zero = tape.input(Tensor({1}, {0.0}));
    const NodeId loss = tape.affine(sq, ones, zero);
    CHECK(tape.value(loss).data[0] == doctest::Approx(5.0));
    tape.backward(loss);
    CHECK(tape.grad(w).data[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(tape.grad(w).data[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("mean_rows gradient is 1/k on unmasked rows and 0 elsewhere") {
    Tape tape;
    const NodeId m = tape.input(Tensor({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
    const NodeId mean = tape.mean_rows(m, {1, 0, 1});
    const NodeId ones = tape.input(Tensor({2, 1}, {1.0, 1.0}));
    const NodeId zero = tape.input(Tensor({1}, {0.0}));
    const NodeId loss = tape.affine(mean, ones, zero);
    tape.backward(loss);
    const Tensor& g = tape.grad(m);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(g.data[0 * 2 + c] == doctest::Approx(0.5));
        CHECK(g.data[1 * 2 + c] == 0.0);
        CHECK(g.data[2 * 2 + c] == doctest::Approx(0.5));
    }
}

TEST_CASE("dropout is identity in inference mode and rescales in training") {
    Tape tape;
    Rng rng(5);
    const NodeId x = tape.input(Tensor({1, 8}, {1, 1, 1, 1, 1, 1, 1, 1}));
    const NodeId eval_out = tape.dropout(x, 0.3, rng, false);
    CHECK(eval_out == x);  // untouched, rng not consumed

    // Training mode: surviving entries are scaled by 1/keep.
    Rng rng2(5);
    const NodeId train_out = tape.dropout(x, 0.5, rng2, true);
    for (const double v : tape.value(train_out).data) {
        CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    }
}

TEST_CASE("dropout mask stream is reproducible per seed") {
    auto run = [](std::uint64_t seed) {
        Tape tape;
        Rng rng(seed);
        const NodeId x = tape.input(Tensor::full({4, 4}, 1.0));
        const NodeId d = tape.dropout(x, 0.3, rng, true);
        return tape.value(d).data;
    };
    CHECK(run(77) == run(77));
    CHECK(run(77) != run(78));
}

TEST_CASE("softmax rows sum to one and sigmoid stays strictly inside (0,1)") {
    Rng rng(110);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        const NodeId x = tape.input(random_tensor({3, 5}, rng, -30.0, 30.0));
        const NodeId sm = tape.softmax(x);
        const Tensor& v = tape.value(sm);
        for (std::size_t r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 5; ++c) sum += v.data[r * 5 + c];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
        const NodeId sg = tape.sigmoid(x);
        for (const double s : tape.value(sg).data) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("adamw single-step closed form") {
    ParamStore store;
    store.add("theta", Tensor({1}, {1.0}));
    store.grad("theta").data[0] = 1.0;
    store.step_adamw({1e-3, 0.9, 0.999, 1e-8, 0.0});
    // First step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
    CHECK(store.value("theta").data[0] == doctest::Approx(0.999).epsilon(1e-9));
    CHECK(store.step_count() == 1);
    CHECK(store.grad("theta").data[0] == 0.0);
}

TEST_CASE("adamw with zero gradient leaves parameters unchanged") {
    ParamStore store;
    store.add("theta", Tensor({2}, {0.4, -0.7}));
    store.step_adamw({1e-2, 0.9, 0.999, 1e-8, 0.0});
    CHECK(store.value("theta").data[0] == 0.4);
    CHECK(store.value("theta").data[1] == -0.7);
}

TEST_CASE("adamw decoupled weight decay shrinks by exactly lr*wd*theta") {
    ParamStore store;
    store.add("theta", Tensor({1}, {2.0}));
    store.step_adamw({0.1, 0.9, 0.999, 1e-8, 0.01});
    CHECK(store.value("theta").data[0] == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0).epsilon(1e-12));
}

TEST_CASE("adamw rejects non-positive learning rates") {
    ParamStore store;
    store.add("theta", Tensor({1}, {1.0}));
    CHECK_THROWS_AS(store.step_adamw({0.0, 0.9, 0.999, 1e-8, 0.0}), ConfigError);
    CHECK_THROWS_AS(store.step_adamw({-1.0, 0.9, 0.999, 1e-8, 0.0}), ConfigError);
}

TEST_CASE("parameter leaves flush gradients into the store") {
    ParamStore store;
    store.add("w", Tensor({1, 2}, {1.0, 2.0}));
    Tape tape;
    const NodeId w = tape.param(store, "w");
    const NodeId target = tape.input(Tensor({1, 2}, {0.0, 0.0}));
    const NodeId loss = tape.rmse_loss(w, target);
    tape.backward(loss);
    // d sqrt((w1^2+w2^2)/2) / dw = w / (2 * rmse)
    const double rmse = std::sqrt(2.5);
    CHECK(store.grad("w").data[0] == doctest::Approx(1.0 / (2.0 * rmse)));
    CHECK(store.grad("w").data[1] == doctest::Approx(2.0 / (2.0 * rmse)));
}

TEST_CASE("engine error paths") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(0), StateError);  // nothing recorded

    const NodeId a = tape.input(Tensor({1, 2}, {1.0, 2.0}));
    const NodeId b = tape.input(Tensor({1, 3}, {1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    CHECK_THROWS_AS(tape.rmse_loss(a, b), ShapeError);
    CHECK_THROWS_AS(tape.affine(a, b, a), ShapeError);

    Rng rng(1);
    CHECK_THROWS_AS(tape.dropout(a, 1.0, rng, true), ConfigError);
    CHECK_THROWS_AS(tape.dropout(a, -0.1, rng, true), ConfigError);

    CHECK_THROWS_AS(tape.input(Tensor({1}, {std::nan("")})), NumericError);
    CHECK_THROWS_AS(tape.grad(a), StateError);  // backward has not run

    const NodeId probs = tape.input(Tensor({1, 2}, {0.9, 0.2}));
    CHECK_THROWS_AS(tape.cross_entropy(probs, {0}), NumericError);  // rows must sum to 1
    const NodeId ok = tape.input(Tensor({1, 2}, {0.5, 0.5}));
    CHECK_THROWS_AS(tape.cross_entropy(ok, {2}), IndexError);

    CHECK_THROWS_AS(tape.backward(a), StateError);  // loss must be scalar

    const NodeId scalar = tape.rmse_loss(a, a);
    tape.backward(scalar);
    CHECK_THROWS_AS(tape.backward(scalar), StateError);  // tape consumed
    CHECK_THROWS_AS(tape.sigmoid(a), StateError);        // no recording after backward
}
