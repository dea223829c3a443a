#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fd_check.hpp"
#include "sglab/network.hpp"

using namespace sglab;

TEST_CASE("dense layer basics") {
    DenseLayer layer;
    layer.W = identity(3);
    layer.b = Matrix(1, 3);
    const Matrix x = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(dense_forward(layer, x) == x);

    SUBCASE("zero upstream gives zero gradients") {
        DenseGrads grads;
        const Matrix gin = dense_backward(layer, x, zeros(2, 3), grads);
        CHECK(sum_sq(gin) == 0.0);
        CHECK(sum_sq(grads.dW) == 0.0);
        CHECK(sum_sq(grads.db) == 0.0);
    }

    SUBCASE("shape errors") {
        CHECK_THROWS_AS(dense_forward(layer, Matrix(2, 4)), ShapeError);
        DenseGrads grads;
        CHECK_THROWS_AS(dense_backward(layer, x, Matrix(2, 4), grads), ShapeError);
    }
}

TEST_CASE("activations") {
    const Matrix x = Matrix::from_rows({{-1, 2}});
    CHECK(act_forward(ActKind::relu, x) == Matrix::from_rows({{0, 2}}));

    const Matrix up = Matrix::from_rows({{5, 7}});
    const Matrix out = act_forward(ActKind::relu, x);
    const Matrix g = act_backward(ActKind::relu, x, out, up);
    CHECK(g(0, 0) == 0.0); // derivative is 0 where the input was negative
    CHECK(g(0, 1) == 7.0);

    const Matrix s = act_forward(ActKind::sigmoid, Matrix::from_rows({{0, 800, -800}}));
    CHECK(s(0, 0) == doctest::Approx(0.5));
    CHECK(s(0, 1) > 0.0);
    CHECK(s(0, 1) <= 1.0);
    CHECK(s(0, 2) >= 0.0); // no overflow for large negative inputs
    CHECK(std::isfinite(s(0, 2)));

    CHECK(act_kind_from_string("relu") == ActKind::relu);
    CHECK_THROWS_AS(act_kind_from_string("tanh"), ValueError);
}

TEST_CASE("batchnorm forward") {
    SUBCASE("hand-normalization oracle, eps = 0") {
        BatchNormLayer bn(1, 0.9, 0.0);
        BnCache cache;
        const Matrix x = Matrix::from_rows({{0}, {2}});
        const Matrix out = bn_forward(bn, x, Mode::train, cache);
        // mean 1, population variance 1 -> normalized to -1, +1
        CHECK(out(0, 0) == doctest::Approx(-1.0));
        CHECK(out(1, 0) == doctest::Approx(1.0));
    }

    SUBCASE("normalized pre-scale output has batch mean 0 and variance 1") {
        Rng rng(4);
        BatchNormLayer bn(5, 0.9, 1e-12); // tiny eps so variance comes out at 1
        BnCache cache;
        const Matrix x = gaussian_matrix(rng, 32, 5, 2.0, 3.0);
        bn_forward(bn, x, Mode::train, cache);
        const Matrix mean = col_means(cache.xhat);
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(std::abs(mean(0, j)) < 1e-6);
            double var = 0.0;
            for (std::size_t i = 0; i < 32; ++i)
                var += (cache.xhat(i, j) - mean(0, j)) * (cache.xhat(i, j) - mean(0, j));
            var /= 32.0;
            CHECK(std::abs(var - 1.0) < 1e-6);
        }
    }

    SUBCASE("eval mode is a frozen affine map") {
        Rng rng(5);
        BatchNormLayer bn(3);
        BnCache cache;
        // a few train batches to move the running stats off their defaults
        for (int i = 0; i < 5; ++i) bn_forward(bn, gaussian_matrix(rng, 16, 3, 1.0, 2.0), Mode::train, cache);
        const BatchNormLayer frozen = bn;
        const Matrix x = gaussian_matrix(rng, 4, 3);
        const Matrix out1 = bn_forward(bn, x, Mode::eval, cache);
        const Matrix out2 = bn_forward(bn, x, Mode::eval, cache);
        CHECK(out1 == out2);
        CHECK(bn.running_mean == frozen.running_mean); // eval never touches stats
        CHECK(bn.running_var == frozen.running_var);
        // per-row outputs are independent of the rest of the batch
        Matrix single = row_copy(x, 2);
        const Matrix out3 = bn_forward(bn, single, Mode::eval, cache);
        for (std::size_t j = 0; j < 3; ++j) CHECK(out3(0, j) == out1(2, j));
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(BatchNormLayer(0), ValueError);
        CHECK_THROWS_AS(BatchNormLayer(3, 1.5), ValueError);
        CHECK_THROWS_AS(BatchNormLayer(3, 0.9, -1.0), ValueError);
        BatchNormLayer bn(3);
        BnCache cache;
        CHECK_THROWS_AS(bn_forward(bn, Matrix(2, 4), Mode::train, cache), ShapeError);
        BnGrads grads;
        CHECK_THROWS_AS(bn_backward(bn, BnCache{}, Matrix(2, 3), grads), ValueError);
    }
}

TEST_CASE("finite-difference checks for every layer") {
    Rng rng(100);
    for (int trial = 0; trial < 4; ++trial) {
        const std::size_t n = 2 + rng.index(7);
        const std::size_t din = 1 + rng.index(8);
        const std::size_t dout = 1 + rng.index(8);

        SUBCASE("dense") {
            DenseLayer layer(din, dout, rng);
            Matrix x = gaussian_matrix(rng, n, din);
            const Matrix G = gaussian_matrix(rng, n, dout);
            auto eval = [&]() { return dot(G, dense_forward(layer, x)); };
            DenseGrads grads;
            const Matrix gin = dense_backward(layer, x, G, grads);
            CHECK(grad_rel_err(gin, numeric_grad(x, eval)) < 1e-4);
            CHECK(grad_rel_err(grads.dW, numeric_grad(layer.W, eval)) < 1e-4);
            CHECK(grad_rel_err(grads.db, numeric_grad(layer.b, eval)) < 1e-4);
        }

        SUBCASE("activations") {
            for (ActKind kind : {ActKind::relu, ActKind::sigmoid}) {
                Matrix x = gaussian_matrix(rng, n, din);
                const Matrix G = gaussian_matrix(rng, n, din);
                auto eval = [&]() { return dot(G, act_forward(kind, x)); };
                const Matrix out = act_forward(kind, x);
                const Matrix gin = act_backward(kind, x, out, G);
                CHECK(grad_rel_err(gin, numeric_grad(x, eval)) < 1e-4);
            }
        }

        SUBCASE("batchnorm, train mode") {
            BatchNormLayer bn(din);
            bn.gamma = gaussian_matrix(rng, 1, din, 1.0, 0.2);
            bn.beta = gaussian_matrix(rng, 1, din, 0.0, 0.2);
            Matrix x = gaussian_matrix(rng, n, din, 0.5, 1.5);
            const Matrix G = gaussian_matrix(rng, n, din);
            auto eval = [&]() {
                BatchNormLayer copy = bn; // keep running stats out of the picture
                BnCache c;
                return dot(G, bn_forward(copy, x, Mode::train, c));
            };
            BnCache cache;
            BatchNormLayer work = bn;
            bn_forward(work, x, Mode::train, cache);
            BnGrads grads;
            const Matrix gin = bn_backward(bn, cache, G, grads);
            CHECK(grad_rel_err(gin, numeric_grad(x, eval)) < 1e-4);
            CHECK(grad_rel_err(grads.dgamma, numeric_grad(bn.gamma, eval)) < 1e-4);
            CHECK(grad_rel_err(grads.dbeta, numeric_grad(bn.beta, eval)) < 1e-4);
        }

        SUBCASE("batchnorm, eval mode") {
            BatchNormLayer bn(din);
            bn.running_mean = gaussian_matrix(rng, 1, din);
            bn.running_var = gaussian_matrix(rng, 1, din, 2.0, 0.3);
            Matrix x = gaussian_matrix(rng, n, din);
            const Matrix G = gaussian_matrix(rng, n, din);
            auto eval = [&]() {
                BatchNormLayer copy = bn;
                BnCache c;
                return dot(G, bn_forward(copy, x, Mode::eval, c));
            };
            BnCache cache;
            BatchNormLayer work = bn;
            bn_forward(work, x, Mode::eval, cache);
            BnGrads grads;
            const Matrix gin = bn_backward(bn, cache, G, grads);
            CHECK(grad_rel_err(gin, numeric_grad(x, eval)) < 1e-4);
        }
    }
}

TEST_CASE("losses") {
    const Matrix p = Matrix::from_rows({{0.2, 0.8}, {1.5, -0.5}});
    CHECK(loss_value(LossKind::mse, p, p) == 0.0);
    CHECK(loss_value(LossKind::mse, Matrix::from_rows({{0, 0}}), Matrix::from_rows({{1, 0}})) ==
          doctest::Approx(0.5));

    SUBCASE("mse mean vs sum reduction") {
        const Matrix y = zeros(2, 2);
        const double mean_val = loss_value(LossKind::mse, p, y, Reduction::mean);
        const double sum_val = loss_value(LossKind::mse, p, y, Reduction::sum);
        CHECK(sum_val == doctest::Approx(2.0 * mean_val));
    }

    SUBCASE("softmax rows sum to 1") {
        Rng rng(8);
        const Matrix logits = gaussian_matrix(rng, 20, 7, 0.0, 5.0);
        const Matrix sm = softmax_rows(logits);
        for (std::size_t i = 0; i < sm.rows(); ++i) {
            double rowsum = 0.0;
            for (std::size_t j = 0; j < sm.cols(); ++j) rowsum += sm(i, j);
            CHECK(std::abs(rowsum - 1.0) < 1e-12);
        }
    }

    SUBCASE("logloss value and gradient match the softmax form") {
        Rng rng(9);
        Matrix logits = gaussian_matrix(rng, 6, 4);
        Matrix y(6, 4);
        for (std::size_t i = 0; i < 6; ++i) y(i, rng.index(4)) = 1.0;
        CHECK(loss_value(LossKind::logloss, logits, y) > 0.0);
        // dL/dp = softmax(p) - y, scaled by 1/n
        const Matrix g = loss_grad(LossKind::logloss, logits, y);
        const Matrix sm = softmax_rows(logits);
        for (std::size_t i = 0; i < g.size(); ++i)
            CHECK(g.data()[i] == doctest::Approx((sm.data()[i] - y.data()[i]) / 6.0));
        // and against finite differences
        auto eval = [&]() { return loss_value(LossKind::logloss, logits, y); };
        CHECK(grad_rel_err(g, numeric_grad(logits, eval)) < 1e-4);
    }

    SUBCASE("mse gradient matches finite differences") {
        Rng rng(10);
        Matrix pred = gaussian_matrix(rng, 5, 3);
        const Matrix y = gaussian_matrix(rng, 5, 3);
        auto eval = [&]() { return loss_value(LossKind::mse, pred, y); };
        CHECK(grad_rel_err(loss_grad(LossKind::mse, pred, y), numeric_grad(pred, eval)) < 1e-4);
    }

    SUBCASE("one-hot validation") {
        const Matrix logits = Matrix::from_rows({{0.1, 0.9}});
        CHECK_THROWS_AS(loss_value(LossKind::logloss, logits, Matrix::from_rows({{0.5, 0.5}})),
                        ValueError);
        CHECK_THROWS_AS(loss_value(LossKind::logloss, logits, Matrix::from_rows({{1, 1}})),
                        ValueError);
        CHECK_THROWS_AS(loss_grad(LossKind::logloss, logits, Matrix::from_rows({{0, 0}})),
                        ValueError);
    }

    SUBCASE("accuracy") {
        const Matrix pred = Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}});
        const Matrix y = Matrix::from_rows({{1, 0}, {0, 1}, {0, 1}});
        CHECK(accuracy(pred, y) == doctest::Approx(2.0 / 3.0));
    }
}

TEST_CASE("adam") {
    AdamConfig cfg;
    cfg.lr = 3e-5;

    SUBCASE("zero gradient from a fresh state leaves the parameter unchanged") {
        Matrix p = Matrix::from_rows({{1.0, -2.0}});
        const Matrix before = p;
        AdamState state = AdamState::like(p);
        adam_step(state, p, zeros(1, 2), cfg, "p");
        CHECK(p == before);
        CHECK(state.t == 1);
    }

    SUBCASE("first step moves opposite the gradient sign with magnitude ~ lr") {
        Matrix p = Matrix::from_rows({{1.0, 1.0}});
        AdamState state = AdamState::like(p);
        adam_step(state, p, Matrix::from_rows({{0.5, -3.0}}), cfg, "p");
        CHECK(p(0, 0) == doctest::Approx(1.0 - cfg.lr).epsilon(1e-3));
        CHECK(p(0, 1) == doctest::Approx(1.0 + cfg.lr).epsilon(1e-3));
    }

    SUBCASE("1000 steps on f(x) = x^2 from x = 1 with lr 0.1") {
        AdamConfig fast;
        fast.lr = 0.1;
        Matrix x = Matrix::from_rows({{1.0}});
        AdamState state = AdamState::like(x);
        for (int i = 0; i < 1000; ++i) {
            const Matrix g = Matrix::from_rows({{2.0 * x(0, 0)}});
            adam_step(state, x, g, fast, "x");
        }
        CHECK(std::abs(x(0, 0)) < 1e-3);
    }

    SUBCASE("non-finite gradient names the parameter") {
        Matrix p = ones(1, 1);
        AdamState state = AdamState::like(p);
        Matrix bad = ones(1, 1);
        bad(0, 0) = std::nan("");
        try {
            adam_step(state, p, bad, cfg, "block3.W");
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("block3.W") != std::string::npos);
        }
    }
}

TEST_CASE("network assembly and end-to-end gradients") {
    Rng rng(200);

    SUBCASE("build_network structure") {
        Network net = build_network({4, 8, 8, 2}, ActKind::relu, true, LossKind::logloss, rng);
        CHECK(net.blocks.size() == 3);
        CHECK(net.blocks[0].bn.has_value());
        CHECK(net.blocks[0].act.has_value());
        CHECK(!net.blocks[2].bn.has_value()); // output block is plain dense
        CHECK(!net.blocks[2].act.has_value());
        CHECK(net.in_dim() == 4);
        CHECK(net.out_dim() == 2);

        Network linear_net = build_network({4, 8, 2}, std::nullopt, false, LossKind::mse, rng);
        CHECK(!linear_net.blocks[0].act.has_value()); // deep linear stack

        CHECK_THROWS_AS(build_network({4}, ActKind::relu, false, LossKind::mse, rng), ValueError);
        CHECK_THROWS_AS(build_network({4, 0, 2}, ActKind::relu, false, LossKind::mse, rng),
                        ValueError);
    }

    SUBCASE("3-block composition matches finite differences of the scalar loss") {
        for (LossKind lk : {LossKind::mse, LossKind::logloss}) {
            Network net = build_network({3, 6, 5, 2}, ActKind::sigmoid, true, lk, rng);
            Matrix x = gaussian_matrix(rng, 4, 3);
            Matrix y(4, 2);
            if (lk == LossKind::logloss)
                for (std::size_t i = 0; i < 4; ++i) y(i, rng.index(2)) = 1.0;
            else
                y = gaussian_matrix(rng, 4, 2);

            auto eval = [&]() {
                Network copy = net;
                ForwardCache c;
                return loss_value(lk, forward_all(copy, x, Mode::train, c), y);
            };
            ForwardCache cache;
            Network work = net;
            const Matrix p = forward_all(work, x, Mode::train, cache);
            SegmentGrads grads;
            const Matrix gin = backward_blocks(net, cache, loss_grad(lk, p, y), grads);
            CHECK(grad_rel_err(gin, numeric_grad(x, eval)) < 1e-4);
        }
    }

    SUBCASE("segment ranges compose to the full forward pass") {
        Network net = build_network({3, 5, 5, 2}, ActKind::relu, false, LossKind::mse, rng);
        const Matrix x = gaussian_matrix(rng, 6, 3);
        ForwardCache full, lower, upper;
        const Matrix p = forward_all(net, x, Mode::train, full);
        const Matrix h = forward_blocks(net, x, Mode::train, 0, 2, lower);
        const Matrix p2 = forward_blocks(net, h, Mode::train, 2, 3, upper);
        CHECK(p == p2);
    }

    SUBCASE("predict leaves the network untouched") {
        Network net = build_network({3, 5, 2}, ActKind::relu, true, LossKind::mse, rng);
        const Matrix stats_before = net.blocks[0].bn->running_mean;
        predict(net, gaussian_matrix(rng, 8, 3));
        CHECK(net.blocks[0].bn->running_mean == stats_before);
    }

    SUBCASE("apply_grads hits every covered parameter") {
        Network net = build_network({3, 4, 2}, ActKind::relu, true, LossKind::mse, rng);
        NetAdam adam = make_adam(net);
        const Matrix x = gaussian_matrix(rng, 5, 3);
        const Matrix y = gaussian_matrix(rng, 5, 2);
        ForwardCache cache;
        const Matrix p = forward_all(net, x, Mode::train, cache);
        SegmentGrads grads;
        backward_blocks(net, cache, loss_grad(LossKind::mse, p, y), grads);
        const Network before = net;
        AdamConfig cfg;
        cfg.lr = 1e-2;
        apply_grads(net, adam, grads, cfg);
        CHECK(frobenius_norm(sub(net.blocks[0].dense.W, before.blocks[0].dense.W)) > 0.0);
        CHECK(frobenius_norm(sub(net.blocks[1].dense.W, before.blocks[1].dense.W)) > 0.0);
        CHECK(frobenius_norm(sub(net.blocks[0].bn->gamma, before.blocks[0].bn->gamma)) > 0.0);
        CHECK(grads_sq_norm(grads) > 0.0);
    }
}
