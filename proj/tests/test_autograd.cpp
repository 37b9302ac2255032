#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "kneebench/autograd.hpp"
#include "kneebench/rng.hpp"

namespace ag = kb::ag;

namespace {

ag::TensorPtr random_tensor(std::vector<std::size_t> shape, kb::Rng& rng,
                            bool requires_grad = true) {
    auto t = ag::make_tensor(std::move(shape), requires_grad);
    for (auto& v : t->data)
        v = rng.uniform(-1.0, 1.0);
    return t;
}

// Scalar readout: fixed random weighting of the output so every coordinate of
// every input influences the loss.
struct Readout {
    std::vector<double> weights;

    double apply(const ag::TensorPtr& out) const {
        double s = 0.0;
        for (std::size_t i = 0; i < out->size(); ++i)
            s += weights[i] * out->data[i];
        return s;
    }
};

// Runs forward, backs the weighted-sum loss through the graph, then checks the
// analytic gradient of every listed tensor against central differences.
void check_gradients(const std::function<ag::TensorPtr(ag::Graph&)>& forward,
                     const std::vector<ag::TensorPtr>& params, kb::Rng& rng,
                     double tol = 1e-6, std::size_t max_coords = 100) {
    ag::Graph g;
    auto out = forward(g);
    Readout readout;
    readout.weights.resize(out->size());
    kb::Rng wrng(99);
    for (auto& w : readout.weights)
        w = wrng.uniform(-1.0, 1.0);

    auto loss = ag::make_tensor({1});
    loss->data[0] = readout.apply(out);
    g.custom({out}, loss, [out, loss, readout]() {
        out->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i)
            out->grad[i] += loss->grad[0] * readout.weights[i];
    });
    for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    g.backward(loss);

    const double h = 1e-5;
    for (const auto& p : params) {
        REQUIRE(p->grad.size() == p->data.size());
        const std::size_t n = p->size();
        for (std::size_t trial = 0; trial < std::min(max_coords, n); ++trial) {
            const std::size_t i = n <= max_coords
                                      ? trial
                                      : static_cast<std::size_t>(rng.uniform_int(
                                            0, static_cast<std::int64_t>(n) - 1));
            const double saved = p->data[i];
            p->data[i] = saved + h;
            ag::Graph gp;
            const double fp = readout.apply(forward(gp));
            p->data[i] = saved - h;
            ag::Graph gm;
            const double fm = readout.apply(forward(gm));
            p->data[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(p->grad[i] - fd) / (std::abs(p->grad[i]) + 1e-8);
            CHECK(rel < tol);
        }
    }
}

} // namespace

TEST_CASE("conv1d identity kernel passes input through") {
    ag::Graph g;
    kb::Rng rng(1);
    auto x = random_tensor({2, 3, 8}, rng);
    auto w = ag::make_tensor({3, 3, 1}, true);
    for (std::size_t o = 0; o < 3; ++o)
        w->data[o * 3 + o] = 1.0;
    auto b = ag::make_tensor({3}, true);
    auto y = g.conv1d(x, w, b);
    REQUIRE(y->shape == x->shape);
    for (std::size_t i = 0; i < x->size(); ++i)
        CHECK(y->data[i] == doctest::Approx(x->data[i]));
}

TEST_CASE("conv1d box kernel on ones gives 3 inside and 2 at the edges") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 8});
    std::fill(x->data.begin(), x->data.end(), 1.0);
    auto w = ag::make_tensor({1, 1, 3});
    std::fill(w->data.begin(), w->data.end(), 1.0);
    auto b = ag::make_tensor({1});
    auto y = g.conv1d(x, w, b);
    CHECK(y->data.front() == doctest::Approx(2.0));
    CHECK(y->data.back() == doctest::Approx(2.0));
    for (std::size_t t = 1; t + 1 < 8; ++t)
        CHECK(y->data[t] == doctest::Approx(3.0));
}

TEST_CASE("conv1d even kernel pads one extra on the left") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 4});
    for (std::size_t i = 0; i < 4; ++i)
        x->data[i] = static_cast<double>(i + 1);
    auto w = ag::make_tensor({1, 1, 2});
    w->data = {10.0, 1.0}; // y[t] = 10*x[t-1] + x[t]
    auto b = ag::make_tensor({1});
    auto y = g.conv1d(x, w, b);
    REQUIRE(y->shape[2] == 4);
    CHECK(y->data[0] == doctest::Approx(1.0));
    CHECK(y->data[1] == doctest::Approx(12.0));
    CHECK(y->data[2] == doctest::Approx(23.0));
    CHECK(y->data[3] == doctest::Approx(34.0));
}

TEST_CASE("conv1d is linear in its input") {
    kb::Rng rng(2);
    auto w = random_tensor({2, 3, 5}, rng);
    auto b = ag::make_tensor({2});
    auto x1 = random_tensor({1, 3, 16}, rng);
    auto x2 = random_tensor({1, 3, 16}, rng);
    auto mix = ag::make_tensor({1, 3, 16});
    const double a1 = 0.7, a2 = -1.3;
    for (std::size_t i = 0; i < mix->size(); ++i)
        mix->data[i] = a1 * x1->data[i] + a2 * x2->data[i];
    ag::Graph g;
    auto y1 = g.conv1d(x1, w, b);
    auto y2 = g.conv1d(x2, w, b);
    auto ym = g.conv1d(mix, w, b);
    for (std::size_t i = 0; i < ym->size(); ++i)
        CHECK(ym->data[i] == doctest::Approx(a1 * y1->data[i] + a2 * y2->data[i]));
}

TEST_CASE("conv1d gradients match central differences") {
    kb::Rng rng(3);
    auto x = random_tensor({2, 3, 16}, rng);
    auto w = random_tensor({4, 3, 11}, rng);
    auto b = random_tensor({4}, rng);
    check_gradients([&](ag::Graph& g) { return g.conv1d(x, w, b); }, {x, w, b}, rng);
}

TEST_CASE("conv1d rejects mismatched shapes") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 2, 8});
    auto w = ag::make_tensor({1, 3, 3});
    auto b = ag::make_tensor({1});
    CHECK_THROWS_AS(g.conv1d(x, w, b), kb::ShapeMismatch);
}

TEST_CASE("maxpool1d halves the length and takes pair maxima") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 4});
    x->data = {1.0, 2.0, 3.0, 4.0};
    auto y = g.maxpool1d(x);
    REQUIRE(y->shape == std::vector<std::size_t>{1, 1, 2});
    CHECK(y->data[0] == 2.0);
    CHECK(y->data[1] == 4.0);
    auto odd = ag::make_tensor({1, 1, 5});
    CHECK_THROWS_AS(g.maxpool1d(odd), kb::ShapeMismatch);
}

TEST_CASE("maxpool1d routes gradient to the left element on ties") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 4});
    std::fill(x->data.begin(), x->data.end(), 5.0);
    auto y = g.maxpool1d(x);
    auto loss = ag::make_tensor({1});
    loss->data[0] = y->data[0] + y->data[1];
    g.custom({y}, loss, [y, loss]() {
        y->ensure_grad();
        for (auto& v : y->grad)
            v += loss->grad[0];
    });
    g.backward(loss);
    CHECK(x->grad == std::vector<double>{1.0, 0.0, 1.0, 0.0});
}

TEST_CASE("maxpool1d gradients match central differences") {
    kb::Rng rng(4);
    auto x = random_tensor({2, 3, 16}, rng);
    check_gradients([&](ag::Graph& g) { return g.maxpool1d(x); }, {x}, rng);
}

TEST_CASE("transposed_conv1d with unit weights repeats each value twice") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 3});
    x->data = {1.0, 2.0, 3.0};
    auto w = ag::make_tensor({1, 1, 2});
    w->data = {1.0, 1.0};
    auto b = ag::make_tensor({1});
    auto y = g.transposed_conv1d(x, w, b);
    CHECK(y->data == std::vector<double>{1.0, 1.0, 2.0, 2.0, 3.0, 3.0});
}

TEST_CASE("transposed_conv1d maps zeros to zeros") {
    ag::Graph g;
    kb::Rng rng(5);
    auto x = ag::make_tensor({1, 2, 4});
    auto w = random_tensor({3, 2, 2}, rng);
    auto b = ag::make_tensor({3});
    auto y = g.transposed_conv1d(x, w, b);
    for (double v : y->data)
        CHECK(v == 0.0);
}

TEST_CASE("transposed_conv1d gradients match central differences") {
    kb::Rng rng(6);
    auto x = random_tensor({2, 3, 8}, rng);
    auto w = random_tensor({2, 3, 2}, rng);
    auto b = random_tensor({2}, rng);
    check_gradients([&](ag::Graph& g) { return g.transposed_conv1d(x, w, b); }, {x, w, b}, rng);
}

TEST_CASE("maxpool then unit transposed conv preserves length") {
    ag::Graph g;
    kb::Rng rng(7);
    auto x = random_tensor({1, 1, 16}, rng);
    auto w = ag::make_tensor({1, 1, 2});
    w->data = {1.0, 1.0};
    auto b = ag::make_tensor({1});
    auto y = g.transposed_conv1d(g.maxpool1d(x), w, b);
    CHECK(y->shape[2] == 16);
}

TEST_CASE("batchnorm1d train mode standardizes each channel") {
    ag::Graph g;
    kb::Rng rng(8);
    auto x = random_tensor({4, 3, 10}, rng);
    auto gamma = ag::make_tensor({3});
    std::fill(gamma->data.begin(), gamma->data.end(), 1.0);
    auto beta = ag::make_tensor({3});
    std::vector<double> rm(3, 0.0), rv(3, 1.0);
    auto y = g.batchnorm1d(x, gamma, beta, rm, rv, true, 0.1, 1e-5);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0, ss = 0.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t t = 0; t < 10; ++t) {
                const double v = y->data[(b * 3 + c) * 10 + t];
                s += v;
                ss += v * v;
            }
        const double mean = s / 40.0;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(ss / 40.0 - mean * mean == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm1d applies gamma and beta affinely") {
    kb::Rng rng(9);
    auto x = random_tensor({2, 2, 8}, rng);
    auto g1 = ag::make_tensor({2});
    std::fill(g1->data.begin(), g1->data.end(), 1.0);
    auto b0 = ag::make_tensor({2});
    auto g2 = ag::make_tensor({2});
    std::fill(g2->data.begin(), g2->data.end(), 2.0);
    auto b3 = ag::make_tensor({2});
    std::fill(b3->data.begin(), b3->data.end(), 3.0);
    std::vector<double> rm1(2, 0.0), rv1(2, 1.0), rm2(2, 0.0), rv2(2, 1.0);
    ag::Graph g;
    auto y1 = g.batchnorm1d(x, g1, b0, rm1, rv1, true, 0.1, 1e-5);
    auto y2 = g.batchnorm1d(x, g2, b3, rm2, rv2, true, 0.1, 1e-5);
    for (std::size_t i = 0; i < y1->size(); ++i)
        CHECK(y2->data[i] == doctest::Approx(2.0 * y1->data[i] + 3.0));
}

TEST_CASE("batchnorm1d eval mode uses running statistics") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 4});
    x->data = {1.0, 2.0, 3.0, 4.0};
    auto gamma = ag::make_tensor({1});
    gamma->data = {1.0};
    auto beta = ag::make_tensor({1});
    std::vector<double> rm{2.0}, rv{4.0};
    auto y = g.batchnorm1d(x, gamma, beta, rm, rv, false, 0.1, 0.0);
    CHECK(y->data[0] == doctest::Approx(-0.5));
    CHECK(y->data[3] == doctest::Approx(1.0));
    CHECK(rm[0] == 2.0); // eval mode leaves running stats untouched
}

TEST_CASE("batchnorm1d gradients (input, gamma, beta) match central differences") {
    kb::Rng rng(10);
    auto x = random_tensor({3, 2, 12}, rng);
    auto gamma = random_tensor({2}, rng);
    auto beta = random_tensor({2}, rng);
    // fresh running stats each forward call so repeated calls are deterministic
    check_gradients(
        [&](ag::Graph& g) {
            std::vector<double> rm(2, 0.0), rv(2, 1.0);
            return g.batchnorm1d(x, gamma, beta, rm, rv, true, 0.1, 1e-5);
        },
        {x, gamma, beta}, rng, 1e-5);
}

TEST_CASE("relu and sigmoid pointwise values") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 3});
    x->data = {-1.0, 0.0, 2.0};
    auto r = g.relu(x);
    CHECK(r->data == std::vector<double>{0.0, 0.0, 2.0});
    auto s = g.sigmoid(x);
    CHECK(s->data[1] == doctest::Approx(0.5));
    CHECK(s->data[2] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("relu and sigmoid gradients match central differences") {
    kb::Rng rng(11);
    auto x = random_tensor({2, 2, 16}, rng);
    check_gradients([&](ag::Graph& g) { return g.relu(x); }, {x}, rng);
    check_gradients([&](ag::Graph& g) { return g.sigmoid(x); }, {x}, rng);
}

TEST_CASE("concat_channels stacks and splits gradients") {
    ag::Graph g;
    kb::Rng rng(12);
    auto a = random_tensor({2, 2, 4}, rng);
    auto b = random_tensor({2, 3, 4}, rng);
    auto y = g.concat_channels(a, b);
    REQUIRE(y->shape == std::vector<std::size_t>{2, 5, 4});
    for (std::size_t bb = 0; bb < 2; ++bb) {
        for (std::size_t i = 0; i < 2 * 4; ++i)
            CHECK(y->data[bb * 20 + i] == a->data[bb * 8 + i]);
        for (std::size_t i = 0; i < 3 * 4; ++i)
            CHECK(y->data[bb * 20 + 8 + i] == b->data[bb * 12 + i]);
    }
    auto loss = ag::make_tensor({1});
    for (double v : y->data)
        loss->data[0] += v;
    g.custom({y}, loss, [y, loss]() {
        y->ensure_grad();
        for (auto& v : y->grad)
            v += loss->grad[0];
    });
    g.backward(loss);
    for (double v : a->grad)
        CHECK(v == 1.0);
    for (double v : b->grad)
        CHECK(v == 1.0);
    auto bad = ag::make_tensor({2, 1, 5});
    CHECK_THROWS_AS(g.concat_channels(a, bad), kb::ShapeMismatch);
}

TEST_CASE("backward through a composite stack matches finite differences") {
    kb::Rng rng(13);
    auto x = random_tensor({2, 2, 16}, rng);
    auto w1 = random_tensor({4, 2, 11}, rng);
    auto b1 = random_tensor({4}, rng);
    auto wt = random_tensor({2, 4, 2}, rng);
    auto bt = random_tensor({2}, rng);
    auto gamma = random_tensor({4}, rng);
    auto beta = random_tensor({4}, rng);
    check_gradients(
        [&](ag::Graph& g) {
            std::vector<double> rm(4, 0.0), rv(4, 1.0);
            auto h = g.conv1d(x, w1, b1);
            h = g.batchnorm1d(h, gamma, beta, rm, rv, true, 0.1, 1e-5);
            h = g.relu(h);
            h = g.maxpool1d(h);
            h = g.transposed_conv1d(h, wt, bt);
            return g.sigmoid(h);
        },
        {x, w1, b1, wt, bt, gamma, beta}, rng, 1e-4);
}

TEST_CASE("backward on a sum sets unit gradients everywhere") {
    ag::Graph g;
    kb::Rng rng(14);
    auto x = random_tensor({1, 2, 8}, rng);
    auto loss = ag::make_tensor({1});
    for (double v : x->data)
        loss->data[0] += v;
    g.custom({x}, loss, [x, loss]() {
        x->ensure_grad();
        for (auto& v : x->grad)
            v += loss->grad[0];
    });
    g.backward(loss);
    for (double v : x->grad)
        CHECK(v == 1.0);
}

TEST_CASE("backward of sigmoid(w*x) matches the hand chain rule") {
    ag::Graph g;
    auto x = ag::make_tensor({1, 1, 1}, true);
    x->data = {0.8};
    auto w = ag::make_tensor({1, 1, 1}, true);
    w->data = {-1.7};
    auto b = ag::make_tensor({1}, true);
    auto s = g.sigmoid(g.conv1d(x, w, b));
    auto loss = ag::make_tensor({1});
    loss->data[0] = s->data[0];
    g.custom({s}, loss, [s, loss]() {
        s->ensure_grad();
        s->grad[0] += loss->grad[0];
    });
    g.backward(loss);
    const double z = -1.7 * 0.8;
    const double sig = 1.0 / (1.0 + std::exp(-z));
    CHECK(x->grad[0] == doctest::Approx(sig * (1.0 - sig) * -1.7));
    CHECK(w->grad[0] == doctest::Approx(sig * (1.0 - sig) * 0.8));
}

TEST_CASE("backward rejects a non-scalar or non-terminal loss") {
    ag::Graph g;
    kb::Rng rng(15);
    auto x = random_tensor({1, 1, 4}, rng);
    auto y = g.relu(x);
    CHECK_THROWS_AS(g.backward(y), kb::ShapeMismatch);
    auto scalar = ag::make_tensor({1});
    CHECK_THROWS_AS(g.backward(scalar), kb::GraphCycle);
}

TEST_CASE("adadelta zero gradient leaves parameters unchanged and decays accumulators") {
    std::vector<double> p{1.0, -2.0};
    ag::AdaDeltaState st;
    st.sq_grad = {0.4, 0.4};
    st.sq_step = {0.2, 0.2};
    kb::ag::adadelta_step(p, {0.0, 0.0}, st);
    CHECK(p == std::vector<double>{1.0, -2.0});
    CHECK(st.sq_grad[0] == doctest::Approx(0.2));
    CHECK(st.sq_step[0] == doctest::Approx(0.1));
}

TEST_CASE("adadelta first step matches the recurrence by hand") {
    std::vector<double> p{0.0};
    ag::AdaDeltaState st; // rho 0.5, eps 1e-6, lr 0.5
    kb::ag::adadelta_step(p, {1.0}, st);
    const double expected = -0.5 * std::sqrt(1e-6) / std::sqrt(0.5 + 1e-6);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("adadelta step magnitude settles under repeated identical gradients") {
    std::vector<double> p{0.0};
    ag::AdaDeltaState st;
    double prev_delta = 0.0;
    std::vector<double> deltas;
    for (int i = 0; i < 100; ++i) {
        const double before = p[0];
        kb::ag::adadelta_step(p, {1.0}, st);
        deltas.push_back(std::abs(p[0] - before));
    }
    (void)prev_delta;
    for (std::size_t i = 3; i + 1 < deltas.size(); ++i)
        CHECK(deltas[i + 1] >= deltas[i] - 1e-12);
    CHECK(deltas[99] / deltas[98] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("adadelta rejects mismatched sizes") {
    std::vector<double> p{1.0};
    ag::AdaDeltaState st;
    CHECK_THROWS_AS(kb::ag::adadelta_step(p, {1.0, 2.0}, st), kb::ShapeMismatch);
}
