#include <doctest.h>

#include <cmath>

#include "ganlink/training.hpp"
#include "test_helpers.hpp"

using namespace ganlink;
using test_helpers::random_tensor;

namespace {

// Small paired dataset with class structure, built directly (no files).
Dataset tiny_dataset(std::size_t n, std::size_t image_size, std::size_t text_dim,
                     std::uint64_t seed) {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.segments_per_class = (n + 1) / 2;
    spec.image_size = image_size;
    spec.text_dim = text_dim;
    spec.seed = seed;
    Dataset ds = generate_synthetic_dataset(spec).dataset;
    ds.segments.resize(n);
    return ds;
}

GeneratorConfig micro_gen(std::size_t text_dim) {
    GeneratorConfig g;
    g.noise_dim = 4;
    g.text_dim = text_dim;
    g.text_fc = 8;
    g.deconv_maps = {8};
    g.image_size = 8;
    return g;
}

DiscriminatorConfig micro_disc(std::size_t text_dim) {
    DiscriminatorConfig d;
    d.conv_maps = {8};
    d.text_dim = text_dim;
    d.text_fc = 8;
    d.join_maps = 8;
    d.image_size = 8;
    return d;
}

} // namespace

TEST_CASE("gan_cls_losses on the worked example") {
    auto real = Tensor<float>::from_values({1}, {0.9f});
    auto wrong = Tensor<float>::from_values({1}, {0.2f});
    auto fake = Tensor<float>::from_values({1}, {0.1f});
    auto [l_d, l_g] = gan_cls_losses(real, wrong, fake);
    CHECK(l_d.value() == doctest::Approx(0.269613).epsilon(1e-4));
    CHECK(l_g.value() == doctest::Approx(-std::log(0.1)).epsilon(1e-4));
}

TEST_CASE("a perfect discriminator has near-zero loss") {
    auto real = Tensor<float>::from_values({1}, {1.0f});
    auto wrong = Tensor<float>::from_values({1}, {0.0f});
    auto fake = Tensor<float>::from_values({1}, {0.0f});
    auto [l_d, l_g] = gan_cls_losses(real, wrong, fake);
    (void)l_g;
    CHECK(l_d.value() <= 1e-5f);
}

TEST_CASE("generator loss at score one half is log 2") {
    auto s = Tensor<float>::from_values({1}, {0.5f});
    auto [l_d, l_g] = gan_cls_losses(s, s, s);
    (void)l_d;
    CHECK(l_g.value() == doctest::Approx(0.693147).epsilon(1e-4));
}

TEST_CASE("gan_cls_losses matches an independent scalar evaluation") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> dist(0.01, 0.99);
    for (int rep = 0; rep < 100; ++rep) {
        const double sr = dist(rng), sw = dist(rng), sf = dist(rng);
        auto [l_d, l_g] = gan_cls_losses(Tensor<double>::from_values({1}, {sr}),
                                         Tensor<double>::from_values({1}, {sw}),
                                         Tensor<double>::from_values({1}, {sf}));
        const double expect_d = -(std::log(sr) + 0.5 * (std::log(1 - sw) + std::log(1 - sf)));
        const double expect_g = -std::log(sf);
        CHECK(std::abs(l_d.value() - expect_d) <= 1e-6);
        CHECK(std::abs(l_g.value() - expect_g) <= 1e-6);
    }
}

TEST_CASE("gan_cls_losses backpropagates into all three scores") {
    std::mt19937_64 rng(2);
    auto real = random_tensor<double>({4}, rng, 0.1, 0.9);
    auto wrong = random_tensor<double>({4}, rng, 0.1, 0.9);
    auto fake = random_tensor<double>({4}, rng, 0.1, 0.9);
    real.set_requires_grad(true);
    wrong.set_requires_grad(true);
    fake.set_requires_grad(true);
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        backward(gan_cls_losses(real, wrong, fake).first, tape);
    }
    for (double g : real.grad()) CHECK(g < 0);  // raise real scores
    for (double g : wrong.grad()) CHECK(g > 0); // lower mismatched scores
    for (double g : fake.grad()) CHECK(g > 0);
}

TEST_CASE("two-segment mismatch is the forced swap") {
    std::mt19937_64 rng(3);
    Dataset ds = tiny_dataset(2, 8, 6, 3);
    const auto pairs = sample_mismatched(ds.segments, rng);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].image_index == 1);
    CHECK(pairs[0].text_index == 0);
    CHECK(pairs[1].image_index == 0);
    ds.segments.resize(1);
    CHECK_THROWS_AS(sample_mismatched(ds.segments, rng), DataError);
}

TEST_CASE("mismatched pairs never reuse the segment's own image") {
    std::mt19937_64 rng(4);
    for (int draw = 0; draw < 10000 / 8; ++draw) {
        const auto pairs = sample_mismatched_indices(8, rng);
        for (const auto& p : pairs) REQUIRE(p.image_index != p.text_index);
    }
}

TEST_CASE("mismatch partners are uniform within chi-square tolerance") {
    std::mt19937_64 rng(5);
    const std::size_t n = 8;
    const std::size_t draws = 10000;
    std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(n, 0));
    for (std::size_t d = 0; d < draws; ++d)
        for (const auto& p : sample_mismatched_indices(n, rng))
            counts[p.text_index][p.image_index] += 1;

    const double expected = static_cast<double>(draws) / (n - 1);
    double chi2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double diff = static_cast<double>(counts[i][j]) - expected;
            chi2 += diff * diff / expected;
        }
    // dof = n*(n-2): each row has n-1 cells and one sum constraint.
    const double dof = static_cast<double>(n * (n - 2));
    // Wilson-Hilferty approximation of the 99% chi-square quantile.
    const double z99 = 2.326;
    const double crit = dof * std::pow(1.0 - 2.0 / (9.0 * dof) + z99 * std::sqrt(2.0 / (9.0 * dof)), 3.0);
    CHECK(chi2 < crit);
}

TEST_CASE("train_cgan keeps the 4:1 ledger and the epoch arithmetic") {
    Dataset ds = tiny_dataset(128, 8, 6, 10);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    cfg.seed = 11;
    auto [bundle, log] = train_cgan<float>(ds, micro_gen(6), micro_disc(6), cfg);
    REQUIRE(log.rows.size() == 2); // 128 segments / batch 64
    CHECK(log.rows.back().d_count == 2);
    CHECK(log.rows.back().g_count == 8);
    for (const auto& row : log.rows) {
        CHECK(row.g_count == cfg.gen_updates_per_disc * row.d_count);
        CHECK(std::isfinite(row.d_loss));
        CHECK(std::isfinite(row.g_loss));
    }
    CHECK(bundle.epochs_trained == 1);
}

TEST_CASE("train_cgan is deterministic per seed") {
    Dataset ds = tiny_dataset(16, 8, 6, 12);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 13;
    auto [b1, l1] = train_cgan<float>(ds, micro_gen(6), micro_disc(6), cfg);
    auto [b2, l2] = train_cgan<float>(ds, micro_gen(6), micro_disc(6), cfg);
    REQUIRE(l1.rows.size() == l2.rows.size());
    for (std::size_t i = 0; i < l1.rows.size(); ++i) {
        CHECK(l1.rows[i].d_loss == l2.rows[i].d_loss);
        CHECK(l1.rows[i].g_loss == l2.rows[i].g_loss);
    }
    for (const std::string& name : b1.params.names()) {
        auto v1 = b1.params.at(name).values();
        auto v2 = b2.params.at(name).values();
        for (std::size_t i = 0; i < v1.size(); ++i) REQUIRE(v1[i] == v2[i]);
    }
}

TEST_CASE("train_cgan rejects segments missing a modality") {
    Dataset ds = tiny_dataset(8, 8, 6, 14);
    ds.segments[3].representative.clear();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    try {
        train_cgan<float>(ds, micro_gen(6), micro_disc(6), cfg);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(ds.segments[3].id) != std::string::npos);
    }
}

TEST_CASE("train_ae reduces the reconstruction loss") {
    Dataset ds = tiny_dataset(32, 8, 6, 15);
    AEConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 3 * 8 * 8;
    cfg.branch = 32;
    cfg.hidden = 16;
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 16;
    tc.seed = 16;
    tc.optimizer.learning_rate = 1e-3;
    auto [bundle, log] = train_ae<float>(ds, cfg, tc);
    REQUIRE(log.rows.size() == 20 * 2);
    const double first_epoch = (log.rows[0].d_loss + log.rows[1].d_loss) / 2;
    const double last_epoch = (log.rows[38].d_loss + log.rows[39].d_loss) / 2;
    CHECK(last_epoch < first_epoch);
    (void)bundle;
}

TEST_CASE("train_ae drives a zero-variance dataset to near-zero loss") {
    Dataset ds = tiny_dataset(16, 8, 6, 17);
    for (Segment& s : ds.segments) {
        s.phi = ds.segments[0].phi;
        s.representative = ds.segments[0].representative;
        s.visual_feature = ds.segments[0].visual_feature;
    }
    AEConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 3 * 8 * 8;
    cfg.branch = 32;
    cfg.hidden = 8;
    TrainConfig tc;
    tc.epochs = 200; // one step per epoch at batch 16
    tc.batch_size = 16;
    tc.seed = 18;
    tc.optimizer.learning_rate = 1e-2;
    tc.optimizer.beta1 = 0.9;
    auto [bundle, log] = train_ae<float>(ds, cfg, tc);
    (void)bundle;
    REQUIRE(log.rows.size() == 200);
    CHECK(log.rows.back().d_loss <= 1e-3);
}

TEST_CASE("train_ae is bitwise deterministic per seed") {
    Dataset ds = tiny_dataset(16, 8, 6, 19);
    AEConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 3 * 8 * 8;
    cfg.branch = 16;
    cfg.hidden = 8;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.seed = 20;
    auto [b1, l1] = train_ae<float>(ds, cfg, tc);
    auto [b2, l2] = train_ae<float>(ds, cfg, tc);
    CHECK(l1.rows.back().d_loss == l2.rows.back().d_loss);
    (void)b1;
    (void)b2;
}

TEST_CASE("train_ae requires visual features") {
    Dataset ds = tiny_dataset(8, 8, 6, 21);
    ds.segments[2].visual_feature.clear();
    AEConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 3 * 8 * 8;
    TrainConfig tc;
    tc.epochs = 1;
    try {
        train_ae<float>(ds, cfg, tc);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(ds.segments[2].id) != std::string::npos);
    }
}

TEST_CASE("train_bidnn keeps tied central weights and reduces the loss") {
    Dataset ds = tiny_dataset(32, 8, 6, 22);
    BiDNNConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 3 * 8 * 8;
    cfg.hidden = 16;
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 16;
    tc.seed = 23;
    tc.optimizer.learning_rate = 1e-3;
    auto [bundle, log] = train_bidnn<float>(ds, cfg, tc);

    // The tied check is structural: both directions read one storage, so the
    // transpose relation cannot drift after updates.
    CHECK(bundle.params.contains("bidnn.center.w"));
    CHECK_FALSE(bundle.params.contains("bidnn.v2t_center.w"));

    const double first_epoch = (log.rows[0].d_loss + log.rows[1].d_loss) / 2;
    const double last_epoch = (log.rows[38].d_loss + log.rows[39].d_loss) / 2;
    CHECK(last_epoch < first_epoch);
}

TEST_CASE("train_bidnn is deterministic per seed") {
    Dataset ds = tiny_dataset(16, 8, 6, 24);
    BiDNNConfig cfg;
    cfg.text_dim = 6;
    cfg.visual_dim = 3 * 8 * 8;
    cfg.hidden = 8;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.seed = 25;
    auto [b1, l1] = train_bidnn<float>(ds, cfg, tc);
    auto [b2, l2] = train_bidnn<float>(ds, cfg, tc);
    CHECK(l1.rows.back().d_loss == l2.rows.back().d_loss);
    (void)b1;
    (void)b2;
}

TEST_CASE("tied central matrix serves both directions from one storage") {
    BiDNNConfig cfg;
    cfg.text_dim = 4;
    cfg.visual_dim = 5;
    cfg.hidden = 3;
    auto bundle = build_bidnn<double>(cfg, 26);
    auto& w = bundle.params.at("bidnn.center.w");

    std::mt19937_64 rng(27);
    auto text = random_tensor<double>({2, 4}, rng);
    auto visual = random_tensor<double>({2, 5}, rng);
    auto before = bidnn_forward(bundle, text, visual, Presence::both);

    w.values()[0] += 0.5; // perturb one coefficient; both directions must move
    auto after = bidnn_forward(bundle, text, visual, Presence::both);
    bool text_half_changed = false, visual_half_changed = false;
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
            text_half_changed |= before.embedding.values()[r * 6 + c] !=
                                 after.embedding.values()[r * 6 + c];
            visual_half_changed |= before.embedding.values()[r * 6 + 3 + c] !=
                                   after.embedding.values()[r * 6 + 3 + c];
        }
    CHECK(text_half_changed);
    CHECK(visual_half_changed);
}

TEST_CASE("TrainLog CSV has the expected header and row count") {
    Dataset ds = tiny_dataset(16, 8, 6, 28);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 29;
    auto [bundle, log] = train_cgan<float>(ds, micro_gen(6), micro_disc(6), cfg);
    (void)bundle;
    const std::string path = "train_log_test.csv";
    log.write_csv(path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,d_loss,g_loss,d_count,g_count");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == log.rows.size());
    std::remove(path.c_str());
}
