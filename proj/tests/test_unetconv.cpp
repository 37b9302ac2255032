#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include <zlib.h>

#include "kneebench/rng.hpp"
#include "kneebench/unetconv.hpp"

namespace ag = kb::ag;

namespace {

ag::TensorPtr random_batch(std::size_t B, std::size_t L, std::uint64_t seed) {
    kb::Rng rng(seed);
    auto t = ag::make_tensor({B, 2, L});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < L; ++i) {
            t->data[(b * 2 + 0) * L + i] = static_cast<double>(i) / static_cast<double>(L - 1);
            t->data[(b * 2 + 1) * L + i] = rng.uniform();
        }
    return t;
}

kb::ModelConfig small_config() {
    kb::ModelConfig cfg;
    cfg.length = 64;
    cfg.width_scale = 0.125;
    return cfg;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/kneebench_test_") + name;
}

} // namespace

TEST_CASE("config scaling and validation") {
    kb::ModelConfig cfg;
    cfg.width_scale = 0.25;
    CHECK(cfg.scaled_encoder() == std::vector<std::size_t>{8, 16, 32, 64});
    CHECK(cfg.scaled_bottleneck() == 64);
    CHECK(cfg.scaled_tail() == std::vector<std::size_t>{4, 2, 1, 1});

    kb::ModelConfig bad = cfg;
    bad.length = 100; // not divisible by 16
    CHECK_THROWS_AS(bad.validate(), kb::ConfigError);
    bad = cfg;
    bad.tail_channels = {16, 8, 4, 2};
    CHECK_THROWS_AS(bad.validate(), kb::ConfigError);
    bad = cfg;
    bad.width_scale = 0.0;
    CHECK_THROWS_AS(bad.validate(), kb::ConfigError);
}

TEST_CASE("default model parameter count is in the expected band") {
    kb::ModelConfig cfg;
    auto model = kb::build(cfg, 1);
    const std::size_t n = model.param_count();
    MESSAGE("default parameter count: ", n);
    CHECK(n >= 1000000);
    CHECK(n <= 5000000);
}

TEST_CASE("forward yields B x 1 x L probabilities strictly inside (0,1)") {
    auto model = kb::build(small_config(), 2);
    auto batch = random_batch(3, 64, 7);
    ag::Graph g;
    auto out = kb::forward(model, g, batch, false);
    REQUIRE(out->shape == std::vector<std::size_t>{3, 1, 64});
    for (double v : out->data) {
        CHECK(std::isfinite(v));
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("forward rejects wrong input shapes") {
    auto model = kb::build(small_config(), 2);
    ag::Graph g;
    auto bad_len = ag::make_tensor({1, 2, 32});
    CHECK_THROWS_AS(kb::forward(model, g, bad_len, false), kb::ShapeMismatch);
    auto bad_ch = ag::make_tensor({1, 3, 64});
    CHECK_THROWS_AS(kb::forward(model, g, bad_ch, false), kb::ShapeMismatch);
}

TEST_CASE("eval-mode forward is deterministic and leaves running stats frozen") {
    auto model = kb::build(small_config(), 3);
    auto batch = random_batch(2, 64, 9);
    const auto before = model.enc_bns[0].running_mean;
    ag::Graph g1, g2;
    auto o1 = kb::forward(model, g1, batch, false);
    auto o2 = kb::forward(model, g2, batch, false);
    CHECK(o1->data == o2->data);
    CHECK(model.enc_bns[0].running_mean == before);
}

TEST_CASE("train-mode forward updates running statistics") {
    auto model = kb::build(small_config(), 4);
    auto batch = random_batch(2, 64, 11);
    const auto before = model.enc_bns[0].running_mean;
    ag::Graph g;
    kb::forward(model, g, batch, true);
    CHECK(model.enc_bns[0].running_mean != before);
}

TEST_CASE("train forward equals eval forward once BN stats are synchronized") {
    // With momentum forced to 1 the running stats become the batch stats, so an
    // eval pass right after a train pass must reproduce the train output.
    auto model = kb::build(small_config(), 5);
    auto batch = random_batch(4, 64, 13);
    ag::Graph gt;
    auto train_out = kb::forward(model, gt, batch, true);
    // iterate train->eval until stats converge to the batch statistics
    for (int i = 0; i < 400; ++i) {
        ag::Graph g;
        kb::forward(model, g, batch, true);
    }
    ag::Graph ge;
    auto eval_out = kb::forward(model, ge, batch, false);
    // biased (train) vs unbiased (running) variance differ by N/(N-1)
    for (std::size_t i = 0; i < train_out->size(); ++i)
        CHECK(eval_out->data[i] == doctest::Approx(train_out->data[i]).epsilon(0.05));
}

TEST_CASE("checkpoint round trip reproduces forward output bit-exactly") {
    auto model = kb::build(small_config(), 6);
    // make running stats non-trivial
    auto batch = random_batch(2, 64, 17);
    {
        ag::Graph g;
        kb::forward(model, g, batch, true);
    }
    const std::string path = temp_path("ckpt.bin");
    kb::save_checkpoint(model, path);
    auto loaded = kb::load_checkpoint(path);
    CHECK(loaded.config.length == 64);
    CHECK(loaded.config.width_scale == model.config.width_scale);
    ag::Graph g1, g2;
    auto o1 = kb::forward(model, g1, batch, false);
    auto o2 = kb::forward(loaded, g2, batch, false);
    CHECK(o1->data == o2->data);
    std::remove(path.c_str());
}

TEST_CASE("corrupted checkpoint byte raises ChecksumError") {
    auto model = kb::build(small_config(), 7);
    const std::string path = temp_path("ckpt_corrupt.bin");
    kb::save_checkpoint(model, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(100);
        char byte;
        f.seekg(100);
        f.get(byte);
        byte = static_cast<char>(byte ^ 0x5a);
        f.seekp(100);
        f.put(byte);
    }
    CHECK_THROWS_AS(kb::load_checkpoint(path), kb::ChecksumError);
    std::remove(path.c_str());
}

TEST_CASE("newer checkpoint version raises VersionError naming both versions") {
    auto model = kb::build(small_config(), 8);
    const std::string path = temp_path("ckpt_version.bin");
    kb::save_checkpoint(model, path);
    {
        // bump the version field (offset 4) and refresh the trailing CRC
        std::ifstream in(path, std::ios::binary);
        std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        buf[4] = 99;
        // recompute CRC over everything but the last 4 bytes
        std::string body = buf.substr(0, buf.size() - 4);
        const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                               static_cast<uInt>(body.size()));
        for (int i = 0; i < 4; ++i)
            buf[buf.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    try {
        kb::load_checkpoint(path);
        FAIL("expected VersionError");
    } catch (const kb::VersionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("99") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("predict returns per-index probabilities for a single series") {
    auto model = kb::build(small_config(), 9);
    std::vector<double> xs(64), ys(64);
    for (std::size_t i = 0; i < 64; ++i) {
        xs[i] = static_cast<double>(i) / 63.0;
        ys[i] = xs[i] * xs[i];
    }
    const auto p = kb::predict(model, xs, ys);
    REQUIRE(p.size() == 64);
    for (double v : p) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(kb::predict(model, std::vector<double>(32), std::vector<double>(32)),
                    kb::ShapeMismatch);
}

TEST_CASE("whole reduced-width model passes finite-difference gradient checks") {
    kb::ModelConfig cfg;
    cfg.length = 32;
    cfg.width_scale = 0.0625; // encoder 2,4,8,16
    auto model = kb::build(cfg, 10);
    auto batch = random_batch(2, 32, 19);
    kb::Rng rng(23);

    std::vector<double> weights;
    {
        kb::Rng wrng(31);
        weights.resize(2 * 32);
        for (auto& w : weights)
            w = wrng.uniform(-1.0, 1.0);
    }
    const auto eval_loss = [&]() {
        ag::Graph g;
        auto out = kb::forward(model, g, batch, true);
        double s = 0.0;
        for (std::size_t i = 0; i < out->size(); ++i)
            s += weights[i] * out->data[i];
        return s;
    };

    // analytic gradients
    ag::Graph g;
    auto out = kb::forward(model, g, batch, true);
    auto loss = ag::make_tensor({1});
    for (std::size_t i = 0; i < out->size(); ++i)
        loss->data[0] += weights[i] * out->data[i];
    g.custom({out}, loss, [out, loss, &weights]() {
        out->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i)
            out->grad[i] += loss->grad[0] * weights[i];
    });
    for (auto& [name, p] : model.named_params()) {
        p->ensure_grad();
        p->zero_grad();
    }
    g.backward(loss);

    const double h = 1e-5;
    for (auto& [name, p] : model.named_params()) {
        const std::size_t n = p->size();
        for (int trial = 0; trial < 3; ++trial) {
            const std::size_t i = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
            const double saved = p->data[i];
            p->data[i] = saved + h;
            const double fp = eval_loss();
            p->data[i] = saved - h;
            const double fm = eval_loss();
            p->data[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(p->grad[i] - fd) / (std::abs(p->grad[i]) + 1e-8);
            INFO("param ", name, " index ", i);
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("models built from the same seed agree; different seeds differ") {
    auto a = kb::build(small_config(), 42);
    auto b = kb::build(small_config(), 42);
    auto c = kb::build(small_config(), 43);
    CHECK(a.enc_convs[0].weight->data == b.enc_convs[0].weight->data);
    CHECK(a.enc_convs[0].weight->data != c.enc_convs[0].weight->data);
}
