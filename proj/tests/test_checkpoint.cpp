#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ganlink/checkpoint.hpp"
#include "ganlink/retrieval.hpp"
#include "test_helpers.hpp"

using namespace ganlink;
namespace fs = std::filesystem;

namespace {

ModelBundle<float> small_cgan(std::uint64_t seed) {
    GeneratorConfig g;
    g.noise_dim = 4;
    g.text_dim = 6;
    g.text_fc = 8;
    g.deconv_maps = {16, 8};
    g.image_size = 16;
    DiscriminatorConfig d;
    d.conv_maps = {8, 16};
    d.text_dim = 6;
    d.text_fc = 8;
    d.join_maps = 16;
    d.image_size = 16;
    return build_cgan<float>(g, d, seed);
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path((fs::temp_directory_path() / name).string()) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("MMTE files round-trip bitwise") {
    TempFile f("ganlink_rt.mmte");
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> dist(-5, 5);
    std::vector<float> values(24);
    for (float& v : values) v = dist(rng);
    write_mmte(f.path, {2, 3, 4}, values);
    MmteTensor back = read_mmte(f.path);
    REQUIRE(back.shape == std::vector<std::size_t>{2, 3, 4});
    for (std::size_t i = 0; i < values.size(); ++i) REQUIRE(back.values[i] == values[i]);
}

TEST_CASE("MMTE loader distinguishes magic, version, dtype and truncation errors") {
    TempFile f("ganlink_bad.mmte");
    std::vector<float> values = {1, 2, 3};
    write_mmte(f.path, {3}, values);

    auto corrupt_at = [&](std::size_t offset, char byte) {
        write_mmte(f.path, {3}, values);
        std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
        s.seekp(static_cast<std::streamoff>(offset));
        s.put(byte);
    };

    corrupt_at(0, 'X');
    try {
        read_mmte(f.path);
        FAIL("expected bad magic");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_magic);
    }

    corrupt_at(4, 9); // version
    try {
        read_mmte(f.path);
        FAIL("expected bad version");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_version);
    }

    corrupt_at(8, 7); // dtype
    try {
        read_mmte(f.path);
        FAIL("expected bad dtype");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_dtype);
    }

    write_mmte(f.path, {3}, values);
    fs::resize_file(f.path, fs::file_size(f.path) - 5);
    try {
        read_mmte(f.path);
        FAIL("expected truncation");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::truncated);
    }
}

TEST_CASE("checkpoint save/load restores every tensor bitwise") {
    TempFile f("ganlink_ck.cghl");
    auto bundle = small_cgan(2);
    bundle.epochs_trained = 17;
    // Make batchnorm state nontrivial.
    for (auto& [name, st] : bundle.bn) {
        for (auto& v : st.running_mean) v = 0.25f;
        for (auto& v : st.running_var) v = 2.5f;
    }
    save_checkpoint(bundle, f.path);
    auto back = load_checkpoint<float>(f.path);

    CHECK(back.kind == ModelKind::cgan);
    CHECK(back.seed == bundle.seed);
    CHECK(back.epochs_trained == 17);
    CHECK(back.gen_cfg.deconv_maps == bundle.gen_cfg.deconv_maps);
    CHECK(back.disc_cfg.join_maps == bundle.disc_cfg.join_maps);

    for (const std::string& name : bundle.params.names()) {
        auto a = bundle.params.at(name).values();
        auto b = back.params.at(name).values();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }
    for (const std::string& name : bundle.disc_params.names()) {
        auto a = bundle.disc_params.at(name).values();
        auto b = back.disc_params.at(name).values();
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }
    for (const auto& [name, st] : bundle.bn) {
        const auto& bst = back.bn.at(name);
        for (std::size_t i = 0; i < st.running_mean.size(); ++i) {
            REQUIRE(bst.running_mean[i] == st.running_mean[i]);
            REQUIRE(bst.running_var[i] == st.running_var[i]);
        }
    }
}

TEST_CASE("checkpoint round-trip preserves corpus embeddings bitwise") {
    TempFile f("ganlink_ck_emb.cghl");
    SyntheticSpec spec;
    spec.classes = 2;
    spec.segments_per_class = 4;
    spec.image_size = 16;
    spec.text_dim = 6;
    spec.seed = 3;
    Dataset ds = generate_synthetic_dataset(spec).dataset;

    auto bundle = small_cgan(4);
    EmbeddingMatrix before = embed_corpus(bundle, ds);
    save_checkpoint(bundle, f.path);
    auto back = load_checkpoint<float>(f.path);
    EmbeddingMatrix after = embed_corpus(back, ds);
    REQUIRE(before.rows.size() == after.rows.size());
    for (std::size_t i = 0; i < before.rows.size(); ++i) REQUIRE(before.rows[i] == after.rows[i]);
}

TEST_CASE("checkpoint round-trips the baselines too") {
    TempFile f("ganlink_ck_ae.cghl");
    AEConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 10;
    cfg.branch = 8;
    cfg.hidden = 5;
    auto bundle = build_ae<float>(cfg, 5);
    save_checkpoint(bundle, f.path);
    auto back = load_checkpoint<float>(f.path);
    CHECK(back.kind == ModelKind::ae);
    CHECK(back.ae_cfg.hidden == 5);
    for (const std::string& name : bundle.params.names()) {
        auto a = bundle.params.at(name).values();
        auto b = back.params.at(name).values();
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    BiDNNConfig bc;
    bc.text_dim = 6;
    bc.visual_dim = 10;
    bc.hidden = 4;
    auto bi = build_bidnn<float>(bc, 6);
    save_checkpoint(bi, f.path);
    auto bi_back = load_checkpoint<float>(f.path);
    CHECK(bi_back.kind == ModelKind::bidnn);
    CHECK(bi_back.bidnn_cfg.hidden == 4);
}

TEST_CASE("checkpoint loader reports distinct error kinds") {
    TempFile f("ganlink_ck_bad.cghl");
    auto bundle = build_ae<float>(AEConfig{.text_dim = 4, .visual_dim = 6, .branch = 5,
                                           .hidden = 3, .modality_dropout = 0.0},
                                  7);
    save_checkpoint(bundle, f.path);

    {
        std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
        s.put('X');
    }
    try {
        load_checkpoint<float>(f.path);
        FAIL("expected bad magic");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_magic);
    }

    save_checkpoint(bundle, f.path);
    {
        std::fstream s(f.path, std::ios::in | std::ios::out | std::ios::binary);
        s.seekp(4);
        s.put(9);
    }
    try {
        load_checkpoint<float>(f.path);
        FAIL("expected bad version");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::bad_version);
    }

    save_checkpoint(bundle, f.path);
    fs::resize_file(f.path, fs::file_size(f.path) / 2);
    try {
        load_checkpoint<float>(f.path);
        FAIL("expected truncation");
    } catch (const FormatError& e) {
        CHECK(e.kind() == FormatError::Kind::truncated);
    }
}

TEST_CASE("config parsing rejects unknown keys and mirrors the config types") {
    const std::string good = R"({"noise_dim": 4, "text_dim": 6, "gen_text_fc": 8,
        "deconv_maps": [16, 8], "image_size": 16, "channels": 3,
        "conv_maps": [8, 16], "disc_text_fc": 8, "join_maps": 16,
        "epochs": 3, "batch_size": 8, "learning_rate": 0.001})";
    ParsedConfig cfg = parse_config(ModelKind::cgan, good, true);
    CHECK(cfg.gen.noise_dim == 4);
    CHECK(cfg.disc.join_maps == 16);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.optimizer.learning_rate == doctest::Approx(0.001));

    CHECK_THROWS_AS(parse_config(ModelKind::cgan, R"({"bogus_key": 1})", true), ConfigError);
    // Training keys are rejected where only a model config is expected.
    CHECK_THROWS_AS(parse_config(ModelKind::cgan, R"({"epochs": 3})", false), ConfigError);
    CHECK_THROWS_AS(parse_config(ModelKind::ae, R"({"join_maps": 4})", true), ConfigError);
    CHECK_THROWS_AS(parse_config(ModelKind::cgan, "not json", true), ConfigError);

    // Canonical text re-parses to the same configuration.
    const std::string canon = canonical_model_config(cfg);
    ParsedConfig again = parse_config(ModelKind::cgan, canon, false);
    CHECK(again.gen.deconv_maps == cfg.gen.deconv_maps);
    CHECK(canonical_model_config(again) == canon);
}
