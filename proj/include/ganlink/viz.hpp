#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ganlink/conv.hpp"
#include "ganlink/data.hpp"
#include "ganlink/io.hpp"
#include "ganlink/models.hpp"

namespace ganlink {

struct Provenance {
    std::string model_tag;
    std::string phi_source;
    std::uint64_t z_seed = 0;
};

struct GeneratedImage {
    std::size_t size = 0;
    std::vector<float> pixels; // planar 3*S*S in [-1,1]
    Provenance provenance;
};

// n images from n independent z ~ U(-1,1) draws, generator in infer mode.
template <typename T>
std::vector<GeneratedImage> render_text_to_images(ModelBundle<T>& bundle,
                                                  std::span<const float> phi, std::size_t n,
                                                  std::uint64_t seed,
                                                  const std::string& phi_source = "phi") {
    if (bundle.kind != ModelKind::cgan)
        throw UsageError("render_text_to_images: bundle is not a cgan");
    if (bundle.epochs_trained == 0)
        throw UsageError("render_text_to_images: bundle has not been trained");
    const GeneratorConfig& cfg = bundle.gen_cfg;
    if (phi.size() != cfg.text_dim)
        throw UsageError("render_text_to_images: phi has dimension " +
                         std::to_string(phi.size()) + ", expected " +
                         std::to_string(cfg.text_dim));
    if (n == 0) throw UsageError("render_text_to_images: n must be >= 1");

    std::mt19937_64 rng(seed);
    Tensor<T> z = Tensor<T>::uniform({n, cfg.noise_dim}, T(-1), T(1), rng);
    std::vector<T> phi_rep(n * cfg.text_dim);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < cfg.text_dim; ++i)
            phi_rep[r * cfg.text_dim + i] = static_cast<T>(phi[i]);
    Tensor<T> phi_t = Tensor<T>::from_values({n, cfg.text_dim}, std::move(phi_rep));
    Tensor<T> imgs = generator_forward(bundle, z, phi_t, Mode::infer);

    const std::size_t per = 3 * cfg.image_size * cfg.image_size;
    std::vector<GeneratedImage> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        out[r].size = cfg.image_size;
        out[r].pixels.resize(per);
        for (std::size_t i = 0; i < per; ++i)
            out[r].pixels[i] = static_cast<float>(imgs.values()[r * per + i]);
        out[r].provenance = {bundle.tag, phi_source, seed};
    }
    return out;
}

// Runs the generator's linear pieces adjointly in reverse order: adjoint of
// the output convolution, then each deconv's adjoint (a convolution with the
// same kernels), then the transposed projection and text layers. Batchnorm
// and the activations pass through as identity, so the whole map is linear.
// Returns the [z-like ; phi-like] preimage of length noise_dim + text_dim.
template <typename T>
std::vector<T> invert_generator(const ModelBundle<T>& bundle, std::span<const T> image) {
    if (bundle.kind != ModelKind::cgan) throw UsageError("invert_generator: bundle is not a cgan");
    const GeneratorConfig& cfg = bundle.gen_cfg;
    const std::size_t S = cfg.image_size;
    if (image.size() != 3 * S * S && image.size() != cfg.channels * S * S)
        throw UsageError("invert_generator: image has " + std::to_string(image.size()) +
                         " values, expected " + std::to_string(cfg.channels * S * S));

    // Adjoint of the final 3x3 stride-1 convolution.
    const std::size_t last_maps = cfg.deconv_maps.back();
    std::vector<T> cur(last_maps * S * S);
    {
        const auto g = kernels::make_conv_geom(last_maps, S, S, cfg.channels, 3, 1, 1);
        kernels::conv_backward_input(image.data(), 1, g,
                                     bundle.params.at("gen.out.k").values().data(), cur.data(),
                                     false);
    }

    // Each deconv's adjoint is a stride-2 convolution with the same kernels.
    std::size_t h = S;
    for (std::size_t stage = cfg.deconv_maps.size(); stage-- > 0;) {
        const std::size_t in_c = stage == 0 ? cfg.start_channels() : cfg.deconv_maps[stage - 1];
        const std::size_t out_c = cfg.deconv_maps[stage];
        const auto g = kernels::make_conv_geom(out_c, h, h, in_c, 4, 2, 1);
        std::vector<T> next(in_c * g.out_h * g.out_w);
        kernels::conv_forward(cur.data(), 1, g,
                              bundle.params.at("gen.deconv" + std::to_string(stage) + ".k")
                                  .values()
                                  .data(),
                              next.data());
        cur = std::move(next);
        h = g.out_h;
    }

    // Transposed projection back to [z ; text-feature] space.
    const Tensor<T>& proj_w = bundle.params.at("gen.proj.w");
    const std::size_t pre_dim = cfg.noise_dim + cfg.text_fc;
    std::vector<T> pre(pre_dim, T(0));
    for (std::size_t i = 0; i < pre_dim; ++i) {
        const T* wr = proj_w.values().data() + i * cur.size();
        T acc = 0;
        for (std::size_t j = 0; j < cur.size(); ++j) acc += wr[j] * cur[j];
        pre[i] = acc;
    }

    // The text feature maps back to phi-space through the transposed text layer.
    const Tensor<T>& text_w = bundle.params.at("gen.text.w"); // [text_dim x text_fc]
    std::vector<T> result(cfg.noise_dim + cfg.text_dim, T(0));
    std::copy_n(pre.begin(), cfg.noise_dim, result.begin());
    for (std::size_t i = 0; i < cfg.text_dim; ++i) {
        const T* wr = text_w.values().data() + i * cfg.text_fc;
        T acc = 0;
        for (std::size_t j = 0; j < cfg.text_fc; ++j) acc += wr[j] * pre[cfg.noise_dim + j];
        result[cfg.noise_dim + i] = acc;
    }
    return result;
}

// Last text_dim coordinates of a [z ; phi] preimage.
template <typename T>
std::vector<T> slice_text_part(const std::vector<T>& preimage, std::size_t noise_dim,
                               std::size_t text_dim) {
    if (preimage.size() != noise_dim + text_dim)
        throw UsageError("slice_text_part: preimage length " + std::to_string(preimage.size()) +
                         " != " + std::to_string(noise_dim + text_dim));
    return {preimage.begin() + static_cast<std::ptrdiff_t>(noise_dim), preimage.end()};
}

struct WordRanking {
    std::vector<std::pair<std::string, double>> entries; // non-increasing similarity
};

// Top-k vocabulary words by cosine similarity to the query; ties break
// lexicographically. A zero query has no direction and is rejected.
inline WordRanking nearest_words(std::span<const double> query, const Vocabulary& vocab,
                                 std::size_t k) {
    if (vocab.empty()) throw DataError("nearest_words: empty vocabulary");
    if (k == 0 || k > vocab.size())
        throw UsageError("nearest_words: k must lie in [1, vocabulary size]");
    if (query.size() != vocab.dim)
        throw UsageError("nearest_words: query dimension " + std::to_string(query.size()) +
                         " != vocabulary dimension " + std::to_string(vocab.dim));
    double qn = 0;
    for (double v : query) qn += v * v;
    if (qn == 0.0) throw DataError("nearest_words: zero query vector");
    qn = std::sqrt(qn);

    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(vocab.size());
    for (const auto& [word, vec] : vocab.table) {
        double dot = 0, n = 0;
        for (std::size_t i = 0; i < vocab.dim; ++i) {
            dot += query[i] * vec[i];
            n += static_cast<double>(vec[i]) * vec[i];
        }
        const double sim = n == 0.0 ? 0.0 : dot / (qn * std::sqrt(n));
        scored.emplace_back(word, sim);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    scored.resize(k);
    return WordRanking{std::move(scored)};
}

template <typename T>
WordRanking nearest_words_t(std::span<const T> query, const Vocabulary& vocab, std::size_t k) {
    std::vector<double> q(query.begin(), query.end());
    return nearest_words(std::span<const double>(q), vocab, k);
}

// PPM output: v -> round((v+1)*127.5) clamped to [0,255].
inline void write_image(const GeneratedImage& image, const std::string& path) {
    write_ppm(path, planar_to_image(image.pixels, image.size, image.size));
}

} // namespace ganlink
