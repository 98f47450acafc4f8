#include <doctest.h>

#include "ganlink/gradcheck.hpp"
#include "ganlink/models.hpp"
#include "ganlink/training.hpp"
#include "test_helpers.hpp"

using namespace ganlink;
using test_helpers::random_tensor;

namespace {

GeneratorConfig small_gen() {
    GeneratorConfig g;
    g.noise_dim = 4;
    g.text_dim = 6;
    g.text_fc = 8;
    g.deconv_maps = {16, 8};
    g.image_size = 16;
    return g;
}

DiscriminatorConfig small_disc() {
    DiscriminatorConfig d;
    d.conv_maps = {8, 16};
    d.text_dim = 6;
    d.text_fc = 8;
    d.join_maps = 16;
    d.image_size = 16;
    return d;
}

// Closed-form parameter counts from the configs.
std::size_t expected_gen_params(const GeneratorConfig& g) {
    std::size_t total = g.text_dim * g.text_fc + g.text_fc;
    const std::size_t c0 = 2 * g.deconv_maps.front();
    total += (g.noise_dim + g.text_fc) * c0 * 16 + c0 * 16;
    std::size_t in_c = c0;
    for (std::size_t m : g.deconv_maps) {
        total += in_c * m * 16; // 4x4 kernels, no bias
        total += 2 * m;         // batchnorm gamma+beta
        in_c = m;
    }
    total += g.channels * in_c * 9; // 3x3 output kernel
    return total;
}

std::size_t expected_disc_params(const DiscriminatorConfig& d, std::size_t channels) {
    std::size_t total = 0;
    std::size_t in_c = channels;
    for (std::size_t i = 0; i < d.conv_maps.size(); ++i) {
        total += d.conv_maps[i] * in_c * 16;
        if (i > 0) total += 2 * d.conv_maps[i];
        in_c = d.conv_maps[i];
    }
    total += d.text_dim * d.text_fc + d.text_fc;
    total += d.join_maps * (d.conv_maps.back() + d.text_fc); // 1x1 kernels
    total += 2 * d.join_maps;
    total += d.embedding_dim() * 1 + 1;
    return total;
}

} // namespace

TEST_CASE("generator produces a 64x64 RGB image in [-1,1] at defaults") {
    auto bundle = build_cgan<float>(GeneratorConfig{}, DiscriminatorConfig{}, 1);
    std::mt19937_64 rng(2);
    auto z = Tensor<float>::uniform({1, 10}, -1.0f, 1.0f, rng);
    auto phi = random_tensor<float>({1, 100}, rng);
    auto img = generator_forward(bundle, z, phi, Mode::infer);
    REQUIRE(img.shape() == Shape{1, 3, 64, 64});
    for (float v : img.values()) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("half-scale generator reaches 32x32") {
    GeneratorConfig g;
    g.deconv_maps = {128, 64, 32};
    g.image_size = 32;
    DiscriminatorConfig d;
    d.conv_maps = {32, 64, 128};
    d.image_size = 32;
    auto bundle = build_cgan<float>(g, d, 3);
    std::mt19937_64 rng(4);
    auto z = Tensor<float>::uniform({1, 10}, -1.0f, 1.0f, rng);
    auto phi = random_tensor<float>({1, 100}, rng);
    CHECK(generator_forward(bundle, z, phi, Mode::infer).shape() == Shape{1, 3, 32, 32});
}

TEST_CASE("generator config validation catches inconsistent image sizes") {
    GeneratorConfig g;
    g.image_size = 48; // not 4 * 2^4
    CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("generator infer mode is bitwise deterministic") {
    auto bundle = build_cgan<float>(small_gen(), small_disc(), 5);
    std::mt19937_64 rng(6);
    auto z = Tensor<float>::uniform({2, 4}, -1.0f, 1.0f, rng);
    auto phi = random_tensor<float>({2, 6}, rng);
    auto a = generator_forward(bundle, z, phi, Mode::infer);
    auto b = generator_forward(bundle, z, phi, Mode::infer);
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a.values()[i] == b.values()[i]);
}

TEST_CASE("generator rejects out-of-range noise and wrong model kinds") {
    auto bundle = build_cgan<float>(small_gen(), small_disc(), 7);
    auto z = Tensor<float>::from_values({1, 4}, {0, 0, 0, 1.5f});
    auto phi = Tensor<float>::zeros({1, 6});
    CHECK_THROWS_AS(generator_forward(bundle, z, phi, Mode::infer), DataError);

    auto ae = build_ae<float>(AEConfig{}, 1);
    auto ok_z = Tensor<float>::zeros({1, 4});
    CHECK_THROWS_AS(generator_forward(ae, ok_z, phi, Mode::infer), UsageError);
}

TEST_CASE("discriminator embedding has dimension 4*4*256 at defaults") {
    DiscriminatorConfig d;
    CHECK(d.embedding_dim() == 4096);
    auto bundle = build_cgan<float>(GeneratorConfig{}, DiscriminatorConfig{}, 8);
    std::mt19937_64 rng(9);
    auto img = random_tensor<float>({2, 3, 64, 64}, rng);
    auto phi = random_tensor<float>({2, 100}, rng);
    auto out = discriminator_forward(bundle, img, phi, Mode::infer);
    CHECK(out.embedding.shape() == Shape{2, 4096});
    CHECK(out.score.shape() == Shape{2});
}

TEST_CASE("discriminator scores lie strictly inside (0,1)") {
    auto bundle = build_cgan<float>(small_gen(), small_disc(), 10);
    std::mt19937_64 rng(11);
    auto img = random_tensor<float>({4, 3, 16, 16}, rng);
    auto phi = random_tensor<float>({4, 6}, rng);
    auto out = discriminator_forward(bundle, img, phi, Mode::train);
    for (float s : out.score.values()) {
        CHECK(s > 0.0f);
        CHECK(s < 1.0f);
    }
}

TEST_CASE("embedding tap is unaffected by the downstream batchnorm mode") {
    auto bundle = build_cgan<float>(small_gen(), small_disc(), 12);
    bundle.bn_momentum = 1.0f; // one train pass makes running stats the batch stats
    std::mt19937_64 rng(13);
    auto img = random_tensor<float>({4, 3, 16, 16}, rng);
    auto phi = random_tensor<float>({4, 6}, rng);
    auto warm = discriminator_forward(bundle, img, phi, Mode::train);
    auto train_out = discriminator_forward(bundle, img, phi, Mode::train);
    auto infer_out = discriminator_forward(bundle, img, phi, Mode::infer);
    REQUIRE(train_out.embedding.size() == infer_out.embedding.size());
    for (std::size_t i = 0; i < train_out.embedding.size(); ++i)
        CHECK(train_out.embedding.values()[i] ==
              doctest::Approx(infer_out.embedding.values()[i]).epsilon(1e-5));
    (void)warm;
}

TEST_CASE("infer-mode embeddings are independent of batch companions") {
    auto bundle = build_cgan<float>(small_gen(), small_disc(), 14);
    std::mt19937_64 rng(15);
    auto img = random_tensor<float>({3, 3, 16, 16}, rng);
    auto phi = random_tensor<float>({3, 6}, rng);
    auto full = discriminator_forward(bundle, img, phi, Mode::infer).embedding;

    // Reverse the batch and compare row by row.
    const std::size_t per_img = 3 * 16 * 16, per_phi = 6;
    std::vector<float> rimg(img.size()), rphi(phi.size());
    for (std::size_t r = 0; r < 3; ++r) {
        std::copy_n(img.values().data() + r * per_img, per_img,
                    rimg.data() + (2 - r) * per_img);
        std::copy_n(phi.values().data() + r * per_phi, per_phi,
                    rphi.data() + (2 - r) * per_phi);
    }
    auto rev = discriminator_forward(bundle,
                                     Tensor<float>::from_values({3, 3, 16, 16}, std::move(rimg)),
                                     Tensor<float>::from_values({3, 6}, std::move(rphi)),
                                     Mode::infer)
                   .embedding;
    const std::size_t dim = bundle.disc_cfg.embedding_dim();
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < dim; ++c)
            REQUIRE(full.values()[r * dim + c] == rev.values()[(2 - r) * dim + c]);
}

TEST_CASE("autoencoder shapes at defaults") {
    auto bundle = build_ae<float>(AEConfig{}, 16);
    std::mt19937_64 rng(17);
    auto text = random_tensor<float>({1, 100}, rng);
    auto visual = random_tensor<float>({1, 4096}, rng);
    auto out = ae_forward(bundle, text, visual);
    CHECK(out.embedding.shape() == Shape{1, 1000});
    CHECK(out.text_rec.shape() == Shape{1, 100});
    CHECK(out.visual_rec.shape() == Shape{1, 4096});
}

TEST_CASE("autoencoder stays finite on zero inputs") {
    AEConfig cfg;
    cfg.text_dim = 8;
    cfg.visual_dim = 12;
    cfg.branch = 16;
    cfg.hidden = 6;
    auto bundle = build_ae<float>(cfg, 18);
    auto out = ae_forward(bundle, Tensor<float>::zeros({2, 8}), Tensor<float>::zeros({2, 12}));
    for (float v : out.embedding.values()) {
        REQUIRE(std::isfinite(v));
        CHECK(std::abs(v) <= 1.0f); // tanh
    }
}

TEST_CASE("bidnn embedding is the 2*hidden concatenation") {
    auto bundle = build_bidnn<float>(BiDNNConfig{}, 19);
    std::mt19937_64 rng(20);
    auto text = random_tensor<float>({1, 100}, rng);
    auto visual = random_tensor<float>({1, 4096}, rng);
    auto out = bidnn_forward(bundle, text, visual, Presence::both);
    CHECK(out.embedding.shape() == Shape{1, 2000});
}

TEST_CASE("bidnn text-only embedding agrees on the text-derived half") {
    BiDNNConfig cfg;
    cfg.text_dim = 8;
    cfg.visual_dim = 10;
    cfg.hidden = 6;
    auto bundle = build_bidnn<float>(cfg, 21);
    std::mt19937_64 rng(22);
    auto text = random_tensor<float>({2, 8}, rng);
    auto visual = random_tensor<float>({2, 10}, rng);
    auto both = bidnn_forward(bundle, text, visual, Presence::both);
    auto text_only = bidnn_forward(bundle, text, Tensor<float>(), Presence::text_only);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 6; ++c) {
            REQUIRE(both.embedding.values()[r * 12 + c] ==
                    text_only.embedding.values()[r * 12 + c]);
            CHECK(text_only.embedding.values()[r * 12 + 6 + c] == 0.0f);
        }
}

TEST_CASE("parameter counts match the closed-form formulas") {
    {
        GeneratorConfig g;
        DiscriminatorConfig d;
        auto bundle = build_cgan<float>(g, d, 23);
        CHECK(bundle.params.total_elements() == expected_gen_params(g));
        CHECK(bundle.disc_params.total_elements() == expected_disc_params(d, g.channels));
    }
    {
        GeneratorConfig g;
        g.deconv_maps = {128, 64, 32};
        g.image_size = 32;
        DiscriminatorConfig d;
        d.conv_maps = {32, 64, 128};
        d.image_size = 32;
        auto bundle = build_cgan<float>(g, d, 24);
        CHECK(bundle.params.total_elements() == expected_gen_params(g));
        CHECK(bundle.disc_params.total_elements() == expected_disc_params(d, g.channels));
    }
}

template <typename T>
static void check_model_losses_fd(double tol, T step, std::uint64_t seed) {
    auto bundle = build_cgan<T>(small_gen(), small_disc(), seed);
    std::mt19937_64 rng(seed + 1);
    const std::size_t n = 2;
    auto phi = random_tensor<T>({n, 6}, rng);
    auto real = random_tensor<T>({n, 3, 16, 16}, rng);
    auto wrong = random_tensor<T>({n, 3, 16, 16}, rng);
    auto fake = random_tensor<T>({n, 3, 16, 16}, rng);
    auto z = Tensor<T>::uniform({n, 4}, T(-1), T(1), rng);

    auto d_loss = [&](const Tensor<T>&) {
        auto s_real = discriminator_forward(bundle, real, phi, Mode::train).score;
        auto s_wrong = discriminator_forward(bundle, wrong, phi, Mode::train).score;
        auto s_fake = discriminator_forward(bundle, fake, phi, Mode::train).score;
        return gan_cls_losses(s_real, s_wrong, s_fake).first;
    };
    auto g_loss = [&](const Tensor<T>&) {
        auto img = generator_forward(bundle, z, phi, Mode::train);
        auto s = discriminator_forward(bundle, img, phi, Mode::train).score;
        return bce_loss(s, 1);
    };

    // finite_diff_check wiggles the shared parameter storage in place, so the
    // loss closures can ignore their argument.
    for (const char* name :
         {"disc.conv0.k", "disc.bn1.gamma", "disc.text.w", "disc.join.k", "disc.score.w"}) {
        auto rep = finite_diff_check<T>(d_loss, bundle.disc_params.at(name), step, tol, 12,
                                        &rng, step / T(100));
        INFO("L_D wrt ", std::string(name), " max rel err ", rep.max_rel_error);
        CHECK(rep.pass);
    }
    for (const char* name :
         {"gen.text.w", "gen.proj.w", "gen.deconv0.k", "gen.bn0.gamma", "gen.out.k"}) {
        auto rep = finite_diff_check<T>(g_loss, bundle.params.at(name), step, tol, 12, &rng,
                                        step / T(100));
        INFO("L_G wrt ", std::string(name), " max rel err ", rep.max_rel_error);
        CHECK(rep.pass);
    }
}

TEST_CASE("full model losses pass finite differences end to end") {
    check_model_losses_fd<double>(1e-3, 1e-3, 30); // high precision, fine step
    check_model_losses_fd<float>(1e-2, 1e-2f, 31);  // standard precision, coarser step
}
