#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <vector>

#include "ganlink/data.hpp"
#include "ganlink/models.hpp"
#include "ganlink/optim.hpp"

namespace ganlink {

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batch_size = 64;
    std::size_t gen_updates_per_disc = 4;
    std::uint64_t seed = 1;
    OptimConfig optimizer; // lr 1e-4, beta1 0.5 defaults

    void validate() const {
        if (epochs == 0 || batch_size == 0 || gen_updates_per_disc == 0)
            throw ConfigError("training: epochs, batch_size and update ratio must be >= 1");
        optimizer.validate();
    }
};

// One row per cycle (GAN) or per optimizer step (reconstruction trainers).
// Single-loss trainers fill d_loss and leave the generator columns at zero.
struct TrainLogRow {
    std::uint64_t step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    std::uint64_t d_count = 0;
    std::uint64_t g_count = 0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::vector<double> epoch_seconds;

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open for writing: " + path);
        out << "step,d_loss,g_loss,d_count,g_count\n";
        out.precision(9);
        for (const TrainLogRow& r : rows)
            out << r.step << "," << r.d_loss << "," << r.g_loss << "," << r.d_count << ","
                << r.g_count << "\n";
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace detail

// L_D = -[mean log s_real + 1/2 (mean log(1-s_wrong) + mean log(1-s_fake))]
// L_G = -mean log s_fake
// The two non-matching terms share the fake weight 1/2 each.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> gan_cls_losses(const Tensor<T>& s_real, const Tensor<T>& s_wrong,
                                               const Tensor<T>& s_fake) {
    Tensor<T> l_d = add(bce_loss(s_real, 1),
                        scale(add(bce_loss(s_wrong, 0), bce_loss(s_fake, 0)), T(0.5)));
    Tensor<T> l_g = bce_loss(s_fake, 1);
    return {l_d, l_g};
}

// A mismatched pair keeps segment i's text and takes its image from partner
// image_index != i.
struct MismatchedPair {
    std::size_t image_index;
    std::size_t text_index;
};

// Uniform random derangement of the batch: every pair gets an image from a
// different segment and each partner is marginally uniform over the others.
inline std::vector<MismatchedPair> sample_mismatched_indices(std::size_t n,
                                                             std::mt19937_64& rng) {
    if (n < 2) throw DataError("sample_mismatched: need at least 2 segments");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    bool ok = false;
    while (!ok) {
        std::shuffle(perm.begin(), perm.end(), rng);
        ok = true;
        for (std::size_t i = 0; i < n; ++i)
            if (perm[i] == i) {
                ok = false;
                break;
            }
    }
    std::vector<MismatchedPair> pairs(n);
    for (std::size_t i = 0; i < n; ++i) pairs[i] = {perm[i], i};
    return pairs;
}

inline std::vector<MismatchedPair> sample_mismatched(const std::vector<Segment>& batch,
                                                     std::mt19937_64& rng) {
    return sample_mismatched_indices(batch.size(), rng);
}

// --- batch assembly ---------------------------------------------------------

template <typename T>
Tensor<T> make_text_batch(const Dataset& ds, const std::vector<std::size_t>& idx,
                          std::size_t text_dim) {
    std::vector<T> buf(idx.size() * text_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Segment& s = ds.segments[idx[r]];
        if (s.phi.size() != text_dim)
            throw DataError("segment " + s.id + ": phi dimension " +
                            std::to_string(s.phi.size()) + " != " + std::to_string(text_dim));
        for (std::size_t i = 0; i < text_dim; ++i)
            buf[r * text_dim + i] = static_cast<T>(s.phi[i]);
    }
    return Tensor<T>::from_values({idx.size(), text_dim}, std::move(buf));
}

template <typename T>
Tensor<T> make_image_batch(const Dataset& ds, const std::vector<std::size_t>& idx,
                           std::size_t image_size) {
    const std::size_t per = 3 * image_size * image_size;
    std::vector<T> buf(idx.size() * per);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Segment& s = ds.segments[idx[r]];
        if (!s.has_representative())
            throw DataError("segment " + s.id + ": missing representative image");
        if (s.representative.size() != per)
            throw DataError("segment " + s.id + ": image size mismatch");
        for (std::size_t i = 0; i < per; ++i) buf[r * per + i] = static_cast<T>(s.representative[i]);
    }
    return Tensor<T>::from_values({idx.size(), 3, image_size, image_size}, std::move(buf));
}

template <typename T>
Tensor<T> make_visual_batch(const Dataset& ds, const std::vector<std::size_t>& idx,
                            std::size_t visual_dim) {
    std::vector<T> buf(idx.size() * visual_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Segment& s = ds.segments[idx[r]];
        if (!s.has_visual_feature())
            throw DataError("segment " + s.id + ": missing visual feature");
        if (s.visual_feature.size() != visual_dim)
            throw DataError("segment " + s.id + ": visual feature dimension " +
                            std::to_string(s.visual_feature.size()) + " != " +
                            std::to_string(visual_dim));
        for (std::size_t i = 0; i < visual_dim; ++i)
            buf[r * visual_dim + i] = static_cast<T>(s.visual_feature[i]);
    }
    return Tensor<T>::from_values({idx.size(), visual_dim}, std::move(buf));
}

template <typename T>
Tensor<T> sample_noise(std::size_t n, std::size_t noise_dim, std::mt19937_64& rng) {
    return Tensor<T>::uniform({n, noise_dim}, T(-1), T(1), rng);
}

// --- trainers ----------------------------------------------------------------

// GAN-CLS loop: each cycle is one discriminator update on the
// {real,real} / {wrong,real} / {fake,real} triplet followed by
// gen_updates_per_disc generator updates on fresh minibatches and fresh noise.
// An epoch is one pass of discriminator batches over the shuffled corpus;
// trailing partial batches are skipped (batchnorm needs N >= 2 anyway).
template <typename T>
std::pair<ModelBundle<T>, TrainLog> train_cgan(
    const Dataset& ds, const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
    const TrainConfig& cfg, const std::function<void(std::size_t)>& epoch_callback = {}) {
    cfg.validate();
    if (ds.segments.empty()) throw DataError("train_cgan: empty dataset");
    for (const Segment& s : ds.segments) {
        if (!s.has_phi()) throw DataError("segment " + s.id + ": missing text modality");
        if (!s.has_representative())
            throw DataError("segment " + s.id + ": missing representative image");
    }
    const std::size_t n = ds.segments.size();
    if (cfg.batch_size > n)
        throw DataError("train_cgan: batch_size " + std::to_string(cfg.batch_size) +
                        " exceeds corpus size " + std::to_string(n));
    if (cfg.batch_size < 2) throw ConfigError("train_cgan: batch_size must be >= 2");

    ModelBundle<T> bundle = build_cgan<T>(gen_cfg, disc_cfg, cfg.seed);
    std::mt19937_64 rng(detail::splitmix64(cfg.seed));
    TrainLog log;
    std::uint64_t d_count = 0, g_count = 0, cycle = 0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<std::size_t> all(order);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
            const std::vector<std::size_t> batch(order.begin() + start,
                                                 order.begin() + start + cfg.batch_size);

            // Discriminator update.
            Tensor<T> phi = make_text_batch<T>(ds, batch, gen_cfg.text_dim);
            Tensor<T> real = make_image_batch<T>(ds, batch, gen_cfg.image_size);
            const auto wrong_pairs = sample_mismatched_indices(batch.size(), rng);
            std::vector<std::size_t> wrong_idx(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i)
                wrong_idx[i] = batch[wrong_pairs[i].image_index];
            Tensor<T> wrong = make_image_batch<T>(ds, wrong_idx, gen_cfg.image_size);
            Tensor<T> z = sample_noise<T>(batch.size(), gen_cfg.noise_dim, rng);
            // Forward-only generation: fakes enter the D update as leaves.
            Tensor<T> fake = generator_forward(bundle, z, phi, Mode::train);

            double d_loss;
            {
                Tape<T> tape;
                TapeScope<T> scope(tape);
                Tensor<T> s_real = discriminator_forward(bundle, real, phi, Mode::train).score;
                Tensor<T> s_wrong = discriminator_forward(bundle, wrong, phi, Mode::train).score;
                Tensor<T> s_fake = discriminator_forward(bundle, fake, phi, Mode::train).score;
                auto [l_d, l_g] = gan_cls_losses(s_real, s_wrong, s_fake);
                (void)l_g;
                backward(l_d, tape);
                d_loss = static_cast<double>(l_d.value());
            }
            adam_step(bundle.disc_params, cfg.optimizer);
            d_count += 1;

            // Generator updates, each on a fresh minibatch and fresh noise.
            double g_loss_sum = 0;
            for (std::size_t r = 0; r < cfg.gen_updates_per_disc; ++r) {
                std::vector<std::size_t> gbatch;
                gbatch.reserve(cfg.batch_size);
                std::sample(all.begin(), all.end(), std::back_inserter(gbatch), cfg.batch_size,
                            rng);
                Tensor<T> gphi = make_text_batch<T>(ds, gbatch, gen_cfg.text_dim);
                Tensor<T> gz = sample_noise<T>(gbatch.size(), gen_cfg.noise_dim, rng);
                double g_loss;
                {
                    Tape<T> tape;
                    TapeScope<T> scope(tape);
                    Tensor<T> img = generator_forward(bundle, gz, gphi, Mode::train);
                    Tensor<T> s = discriminator_forward(bundle, img, gphi, Mode::train).score;
                    Tensor<T> l_g = bce_loss(s, 1);
                    backward(l_g, tape);
                    g_loss = static_cast<double>(l_g.value());
                }
                adam_step(bundle.params, cfg.optimizer);
                zero_grads(bundle.disc_params); // graph ran through D; drop its gradients
                g_loss_sum += g_loss;
                g_count += 1;
            }

            const double g_loss_mean = g_loss_sum / static_cast<double>(cfg.gen_updates_per_disc);
            if (!std::isfinite(d_loss) || !std::isfinite(g_loss_mean))
                throw Error("train_cgan: non-finite loss at cycle " + std::to_string(cycle));
            log.rows.push_back({cycle, d_loss, g_loss_mean, d_count, g_count});
            cycle += 1;
        }
        log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (epoch_callback) epoch_callback(epoch);
    }
    bundle.epochs_trained = cfg.epochs;
    return {std::move(bundle), std::move(log)};
}

// Reconstruction trainer shared by the autoencoder and the BiDNN; one log row
// per optimizer step, reconstruction loss in the d_loss column.
template <typename T, typename StepFn>
std::pair<TrainLog, std::uint64_t> run_reconstruction_epochs(const Dataset& ds,
                                                             const TrainConfig& cfg,
                                                             std::mt19937_64& rng,
                                                             StepFn&& step_fn) {
    const std::size_t n = ds.segments.size();
    TrainLog log;
    std::uint64_t steps = 0;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);
            const double loss = step_fn(batch);
            steps += 1;
            if (!std::isfinite(loss))
                throw Error("reconstruction training: non-finite loss at step " +
                            std::to_string(steps));
            log.rows.push_back({steps - 1, loss, 0.0, steps, 0});
        }
        log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return {std::move(log), steps};
}

template <typename T>
std::pair<ModelBundle<T>, TrainLog> train_ae(const Dataset& ds, const AEConfig& ae_cfg,
                                             const TrainConfig& cfg) {
    cfg.validate();
    if (ds.segments.empty()) throw DataError("train_ae: empty dataset");
    for (const Segment& s : ds.segments) {
        if (!s.has_phi()) throw DataError("segment " + s.id + ": missing text modality");
        if (!s.has_visual_feature()) throw DataError("segment " + s.id + ": missing visual feature");
    }
    ModelBundle<T> bundle = build_ae<T>(ae_cfg, cfg.seed);
    std::mt19937_64 rng(detail::splitmix64(cfg.seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto [log, steps] = run_reconstruction_epochs<T>(
        ds, cfg, rng, [&](const std::vector<std::size_t>& batch) {
            Tensor<T> text = make_text_batch<T>(ds, batch, ae_cfg.text_dim);
            Tensor<T> visual = make_visual_batch<T>(ds, batch, ae_cfg.visual_dim);
            if (ae_cfg.modality_dropout > 0) {
                for (std::size_t r = 0; r < batch.size(); ++r) {
                    if (unit(rng) >= ae_cfg.modality_dropout) continue;
                    const bool drop_text = unit(rng) < 0.5;
                    auto span = drop_text ? text.values() : visual.values();
                    const std::size_t d = drop_text ? ae_cfg.text_dim : ae_cfg.visual_dim;
                    std::fill(span.begin() + static_cast<std::ptrdiff_t>(r * d),
                              span.begin() + static_cast<std::ptrdiff_t>((r + 1) * d), T(0));
                }
            }
            double loss;
            {
                Tape<T> tape;
                TapeScope<T> scope(tape);
                AeOut<T> out = ae_forward(bundle, text, visual);
                Tensor<T> l = add(mse_loss(out.text_rec, text), mse_loss(out.visual_rec, visual));
                backward(l, tape);
                loss = static_cast<double>(l.value());
            }
            adam_step(bundle.params, cfg.optimizer);
            return loss;
        });
    (void)steps;
    bundle.epochs_trained = cfg.epochs;
    return {std::move(bundle), std::move(log)};
}

template <typename T>
std::pair<ModelBundle<T>, TrainLog> train_bidnn(const Dataset& ds, const BiDNNConfig& bi_cfg,
                                                const TrainConfig& cfg) {
    cfg.validate();
    if (ds.segments.empty()) throw DataError("train_bidnn: empty dataset");
    for (const Segment& s : ds.segments) {
        if (!s.has_phi()) throw DataError("segment " + s.id + ": missing text modality");
        if (!s.has_visual_feature()) throw DataError("segment " + s.id + ": missing visual feature");
    }
    ModelBundle<T> bundle = build_bidnn<T>(bi_cfg, cfg.seed);
    std::mt19937_64 rng(detail::splitmix64(cfg.seed));

    auto [log, steps] = run_reconstruction_epochs<T>(
        ds, cfg, rng, [&](const std::vector<std::size_t>& batch) {
            Tensor<T> text = make_text_batch<T>(ds, batch, bi_cfg.text_dim);
            Tensor<T> visual = make_visual_batch<T>(ds, batch, bi_cfg.visual_dim);
            double loss;
            {
                Tape<T> tape;
                TapeScope<T> scope(tape);
                BidnnOut<T> out = bidnn_forward(bundle, text, visual, Presence::both);
                Tensor<T> l = add(mse_loss(out.visual_from_text, visual),
                                  mse_loss(out.text_from_visual, text));
                backward(l, tape);
                loss = static_cast<double>(l.value());
            }
            adam_step(bundle.params, cfg.optimizer);
            return loss;
        });
    (void)steps;
    bundle.epochs_trained = cfg.epochs;
    return {std::move(bundle), std::move(log)};
}

} // namespace ganlink
