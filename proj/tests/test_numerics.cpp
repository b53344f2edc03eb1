#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "fd_util.hpp"
#include "songgen/checkpoint.hpp"
#include "songgen/graph.hpp"
#include "songgen/optim.hpp"
#include "songgen/rng.hpp"
#include "songgen/tensor.hpp"

using namespace songgen;

TEST_CASE("tensor shape handling") {
    Tensor t(2, 3);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.size() == 6);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

    CHECK_THROWS_AS(Tensor(2, 2, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::row({1.0, 2.0}).item(), std::invalid_argument);
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK(Tensor::full(2, 2, 3.0).at(1, 1) == 3.0);
    CHECK(Tensor(1, 2, {1.0, 2.0}) == Tensor::row({1.0, 2.0}));
}

TEST_CASE("matmul matches a hand-computed product") {
    Tensor a(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor b(3, 2, {7, 8, 9, 10, 11, 12});
    Tensor c = ops::matmul(a, b);
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 2);
    CHECK(c.at(0, 0) == 58.0);
    CHECK(c.at(0, 1) == 64.0);
    CHECK(c.at(1, 0) == 139.0);
    CHECK(c.at(1, 1) == 154.0);

    CHECK_THROWS_WITH_AS(ops::matmul(a, a), doctest::Contains("[2x3]"), std::invalid_argument);
    CHECK_THROWS_AS(ops::add(a, b), std::invalid_argument);
}

TEST_CASE("softmax rows are normalized and shift-invariant") {
    Tensor x(2, 3, {1.0, 2.0, 3.0, -5.0, 0.0, 5.0});
    Tensor p = ops::softmax(x);
    for (int r = 0; r < 2; ++r) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += p.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor shifted = ops::scale(x, 1.0);
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 1000.0;
    Tensor p2 = ops::softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(p2[i]).epsilon(1e-12));

    Tensor uniform(1, 3, {0.0, 0.0, 0.0});
    Tensor pu = ops::softmax(uniform);
    for (int c = 0; c < 3; ++c) CHECK(pu.at(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("cross entropy of uniform logits is log of the class count") {
    CHECK(ops::cross_entropy(Tensor::row({1.0, 1.0, 1.0}), 0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(ops::cross_entropy(Tensor::row({0.0, 0.0, 0.0, 0.0}), 2) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    // Numerically stable under extreme logits.
    CHECK(ops::cross_entropy(Tensor::row({1000.0, 0.0}), 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ops::cross_entropy(Tensor::row({1000.0, 0.0}), 1) == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK_THROWS_AS(ops::cross_entropy(Tensor::row({1.0, 2.0}), 2), std::invalid_argument);
}

TEST_CASE("concat and select kernels") {
    Tensor a(1, 2, {1, 2});
    Tensor b(2, 2, {3, 4, 5, 6});
    const Tensor* rparts[] = {&a, &b};
    Tensor r = ops::concat_rows(rparts);
    CHECK(r.rows() == 3);
    CHECK(r.at(2, 1) == 6.0);

    Tensor c(1, 3, {7, 8, 9});
    const Tensor* cparts[] = {&a, &c};
    Tensor k = ops::concat_cols(cparts);
    CHECK(k.rows() == 1);
    CHECK(k.cols() == 5);
    CHECK(k.at(0, 4) == 9.0);

    Tensor s = ops::select_row(b, 1);
    CHECK(s == Tensor::row({5, 6}));
    CHECK_THROWS_AS(ops::select_row(b, 2), std::invalid_argument);
    CHECK(ops::sum(b) == 18.0);
}

namespace {

// Composite expression touching every graph op; used for the gradient check.
double composite_loss(Graph& g, Param& a, Param& b, Param& c, bool run_backward) {
    Value va = g.param(a);
    Value vb = g.param(b);
    Value vc = g.param(c);
    Value m = g.matmul(va, vb);                       // 2x4
    Value t = g.tanh(m);
    Value s = g.sigmoid(m);
    Value e = g.mul(t, s);
    Value sm = g.softmax(e);                          // 2x4
    Value r1 = g.select_row(sm, 1);                   // 1x4
    Value r0 = g.select_row(e, 0);                    // 1x4
    std::vector<Value> cols{r1, r0};
    Value wide = g.concat_cols(cols);                 // 1x8
    Value ce = g.cross_entropy(wide, 3);
    std::vector<Value> rows{t, s};
    Value stack = g.concat_rows(rows);                // 4x4
    Value shifted = g.add(stack, g.constant(Tensor::full(4, 4, 0.25)));
    Value scaled = g.scale(g.matmul(shifted, vc), 0.5);  // 4x1
    Value total = g.sum(g.sub(scaled, g.constant(Tensor::full(4, 1, 0.1))));
    std::vector<Value> terms{ce, total, g.sum(g.add(va, va))};
    Value loss = g.add_n(terms);
    if (run_backward) g.backward(loss);
    return loss.item();
}

}  // namespace

TEST_CASE("analytic gradients match central differences on a composite graph") {
    Rng rng(2024);
    ParameterStore store;
    auto init = [&](int r, int c) {
        Tensor t(r, c);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.8, 0.8);
        return t;
    };
    Param& a = store.create("a", init(2, 3));
    Param& b = store.create("b", init(3, 4));
    Param& c = store.create("c", init(4, 1));

    store.zero_grads();
    Graph g;
    composite_loss(g, a, b, c, true);

    auto loss_fn = [&]() {
        Graph fresh;
        return composite_loss(fresh, a, b, c, false);
    };
    auto res = testutil::check_gradients(store, loss_fn);
    INFO("worst: ", res.worst_param, "[", res.worst_index, "] analytic=", res.analytic, " fd=", res.numeric);
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("graph guards misuse") {
    ParameterStore store;
    Param& p = store.create("p", Tensor::row({1.0, 2.0}));
    Graph g;
    Value v = g.param(p);
    Value v2 = g.param(p);
    CHECK(&v.tensor() == &v2.tensor());  // deduplicated leaf

    Value loss = g.sum(g.add(v, v));
    g.backward(loss);
    CHECK(p.grad == Tensor::row({2.0, 2.0}));
    CHECK_THROWS_AS(g.backward(loss), std::logic_error);
    CHECK_THROWS_AS(g.sigmoid(v), std::logic_error);

    Graph other;
    CHECK_THROWS_AS(other.sigmoid(v), std::logic_error);

    Graph h;
    Value m = h.param(p);
    CHECK_THROWS_AS(h.backward(m), std::invalid_argument);  // non-scalar loss
}

TEST_CASE("gradients accumulate across graphs until zeroed") {
    ParameterStore store;
    Param& p = store.create("p", Tensor::row({3.0}));
    for (int k = 0; k < 3; ++k) {
        Graph g;
        g.backward(g.sum(g.param(p)));
    }
    CHECK(p.grad[0] == 3.0);
    store.zero_grads();
    CHECK(p.grad[0] == 0.0);
}

TEST_CASE("first adam step moves by the learning rate") {
    ParameterStore store;
    Param& p = store.create("w", Tensor::row({0.5, -0.25}));
    Adam opt(store, {.lr = 0.1});
    p.grad[0] = 123.0;  // magnitude is irrelevant on step one
    p.grad[1] = -0.004;
    opt.step();
    CHECK(p.value[0] == doctest::Approx(0.5 - 0.1).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(-0.25 + 0.1).epsilon(1e-6));
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adam converges on a quadratic") {
    ParameterStore store;
    Param& p = store.create("w", Tensor::row({4.0}));
    Adam opt(store, {.lr = 0.05});
    for (int i = 0; i < 2000; ++i) {
        store.zero_grads();
        p.grad[0] = 2.0 * (p.value[0] - 1.5);
        opt.step();
    }
    CHECK(p.value[0] == doctest::Approx(1.5).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients by name") {
    ParameterStore store;
    store.create("fine", Tensor::row({1.0}));
    Param& bad = store.create("w_broken", Tensor::row({1.0}));
    bad.grad[0] = std::numeric_limits<double>::quiet_NaN();
    Adam opt(store);
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("w_broken"), std::runtime_error);
}

TEST_CASE("global norm clipping") {
    ParameterStore store;
    Param& p = store.create("p", Tensor::row({3.0, 4.0}));
    p.grad[0] = 3.0;
    p.grad[1] = 4.0;
    CHECK(store.grad_norm() == doctest::Approx(5.0));
    CHECK(store.clip_grad_norm(10.0) == doctest::Approx(5.0));
    CHECK(p.grad[0] == 3.0);  // under the limit: untouched
    CHECK(store.clip_grad_norm(1.0) == doctest::Approx(5.0));
    CHECK(p.grad[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p.grad[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(store.grad_norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rng streams are deterministic and tag-separated") {
    Rng a(42), b(42);
    for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());
    for (int i = 0; i < 64; ++i) CHECK(a.uniform() == b.uniform());

    Rng c = Rng::for_component(42, "model");
    Rng d = Rng::for_component(42, "embedding");
    CHECK(Rng::derive(42, "model") != Rng::derive(42, "embedding"));
    CHECK(c.next_u64() != d.next_u64());

    Rng e(7);
    for (int i = 0; i < 10000; ++i) {
        double u = e.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("rng derived quantities behave") {
    Rng r(99);
    double mean = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = r.gaussian(2.0, 3.0);
        mean += x;
        sq += x * x;
    }
    mean /= n;
    double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(2.0).epsilon(0.05));
    CHECK(var == doctest::Approx(9.0).epsilon(0.05));

    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) ++counts[r.bounded(5)];
    for (int k = 0; k < 5; ++k) CHECK(counts[k] > 800);

    std::vector<int> order(10);
    std::iota(order.begin(), order.end(), 0);
    auto original = order;
    r.shuffle(order);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == original);
}

TEST_CASE("checkpoint round trip preserves everything bitwise") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "songgen_ckpt_test.bin";

    Checkpoint ck;
    ck.step = 1234;
    ck.manifest = "scheme=swc\nhidden=128\n";
    Rng rng(5);
    Tensor w(3, 4);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.gaussian(0.0, 1.0);
    ck.tensors.emplace_back("enc.W", w);
    ck.tensors.emplace_back("dec.V", Tensor::row({-0.0, 1e-300, 3.14159}));

    save_checkpoint(path.string(), ck);
    Checkpoint back = load_checkpoint(path.string());
    CHECK(back.step == 1234);
    CHECK(back.manifest == ck.manifest);
    REQUIRE(back.tensors.size() == 2);
    CHECK(back.tensors[0].first == "enc.W");
    CHECK(back.tensors[0].second == w);
    CHECK(back.find("dec.V") != nullptr);
    CHECK(*back.find("dec.V") == ck.tensors[1].second);
    CHECK(back.find("missing") == nullptr);

    // Not a checkpoint
    {
        std::ofstream junk(path);
        junk << "hello world, definitely not binary";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint((fs::temp_directory_path() / "nope_missing.bin").string()),
                    std::runtime_error);
    fs::remove(path);
}

TEST_CASE("parameter store bookkeeping") {
    ParameterStore store;
    store.create("a", Tensor(2, 2));
    store.create("b", Tensor(1, 3));
    CHECK(store.tensor_count() == 2);
    CHECK(store.scalar_count() == 7);
    CHECK(store.find("a") != nullptr);
    CHECK(store.find("z") == nullptr);
    CHECK_THROWS_AS(store.create("a", Tensor(1, 1)), std::invalid_argument);
}
