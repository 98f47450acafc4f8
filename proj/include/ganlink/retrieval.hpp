#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ganlink/data.hpp"
#include "ganlink/models.hpp"

namespace ganlink {

// Row-per-segment embedding matrix; rows are stored as f32 regardless of the
// compute precision so files and comparisons are stable.
struct EmbeddingMatrix {
    std::vector<std::string> ids;
    std::size_t dim = 0;
    std::vector<float> rows;
    std::string source; // cgan | ae | bidnn | text_only | visual_only

    std::size_t count() const { return ids.size(); }

    std::span<const float> row(std::size_t i) const {
        return {rows.data() + i * dim, dim};
    }

    std::optional<std::size_t> index_of(const std::string& id) const {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return i;
        return std::nullopt;
    }
};

// 1 - cos(a,b), in [0,2]. A zero-norm side makes the distance 1 (maximal
// ignorance) and sets *degenerate when provided.
double cosine_distance(std::span<const float> a, std::span<const float> b,
                       bool* degenerate = nullptr);

struct RankedTarget {
    std::string id;
    double distance;
};

// All other segments by ascending cosine distance, ties broken by id; top-k.
std::vector<RankedTarget> rank_targets(const std::string& anchor_id,
                                       const EmbeddingMatrix& embeddings, std::size_t k);

// |top-k intersect relevant| / k; a ranking shorter than k counts the missing
// tail as nonrelevant.
double precision_at_k(const std::vector<std::string>& ranking,
                      const std::set<std::string>& relevant, std::size_t k);

struct EvalReport {
    std::size_t k = 10;
    std::string source;
    std::vector<std::vector<double>> per_anchor_per_run;
    std::vector<double> run_means;
    std::size_t runs = 0;
    double mean_percent = 0.0;
    // Sample standard deviation across runs, percent; NaN with fewer than 2 runs.
    double sigma_percent = std::numeric_limits<double>::quiet_NaN();
    std::size_t skipped_anchors = 0;
};

// Builds the report statistics from per-run per-anchor precision values.
EvalReport make_report(std::size_t k, const std::string& source,
                       std::vector<std::vector<double>> per_anchor_per_run);

// Per run: mean P@k over every anchor of the first run that has groundtruth
// entries (anchors without any are skipped and counted). Mean and sample
// sigma are taken across runs.
EvalReport evaluate(const std::vector<EmbeddingMatrix>& runs, const Groundtruth& gt,
                    std::size_t k);

std::string report_table(const std::vector<EvalReport>& reports);
std::string report_csv(const std::vector<EvalReport>& reports);

struct TTestResult {
    double t = 0.0;
    double p = 0.5;
    double dof = 0.0;
};

// Welch two-sample t statistic with Welch-Satterthwaite degrees of freedom;
// p is the one-sided tail for mean(a) > mean(b).
TTestResult one_sided_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a,b), exposed for the t distribution.
double incomplete_beta(double a, double b, double x);

// MMTE matrix [n x dim] plus "<path>.ids" sidecar with one id per line.
void save_embeddings(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path);

// Raw single-modality rows (phi or the visual feature) as an embedding
// matrix, for comparison against the learned models.
enum class RawSource { text_only, visual_only };
EmbeddingMatrix raw_embeddings(const Dataset& ds, RawSource source);

// Runs the model over the corpus in infer mode and collects the designated
// embedding row per segment: discriminator join-conv tap for CGANs, the
// shared hidden layer for the autoencoder, the two central activations for
// the BiDNN. Row order follows the dataset.
template <typename T>
EmbeddingMatrix embed_corpus(ModelBundle<T>& bundle, const Dataset& ds) {
    EmbeddingMatrix m;
    m.source = model_kind_name(bundle.kind);
    m.dim = bundle.embedding_dim();
    m.rows.reserve(ds.segments.size() * m.dim);

    const std::size_t batch_cap = 64;
    std::vector<std::size_t> batch;
    auto flush = [&](const std::vector<std::size_t>& idx) {
        if (idx.empty()) return;
        Tensor<T> emb;
        switch (bundle.kind) {
            case ModelKind::cgan: {
                for (std::size_t i : idx)
                    if (!ds.segments[i].has_representative())
                        throw DataError("segment " + ds.segments[i].id +
                                        ": missing representative image");
                Tensor<T> phi = make_embed_text<T>(ds, idx, bundle.gen_cfg.text_dim);
                Tensor<T> img = make_embed_images<T>(ds, idx, bundle.gen_cfg.image_size);
                emb = discriminator_forward(bundle, img, phi, Mode::infer).embedding;
                break;
            }
            case ModelKind::ae: {
                Tensor<T> phi = make_embed_text<T>(ds, idx, bundle.ae_cfg.text_dim);
                Tensor<T> vis = make_embed_visual<T>(ds, idx, bundle.ae_cfg.visual_dim);
                emb = ae_forward(bundle, phi, vis).embedding;
                break;
            }
            case ModelKind::bidnn: {
                Tensor<T> phi = make_embed_text<T>(ds, idx, bundle.bidnn_cfg.text_dim);
                Tensor<T> vis = make_embed_visual<T>(ds, idx, bundle.bidnn_cfg.visual_dim);
                emb = bidnn_forward(bundle, phi, vis, Presence::both).embedding;
                break;
            }
        }
        for (std::size_t r = 0; r < idx.size(); ++r) {
            m.ids.push_back(ds.segments[idx[r]].id);
            for (std::size_t c = 0; c < m.dim; ++c) {
                const float v = static_cast<float>(emb.values()[r * m.dim + c]);
                if (!std::isfinite(v))
                    throw Error("embed_corpus: non-finite embedding for segment " +
                                ds.segments[idx[r]].id);
                m.rows.push_back(v);
            }
        }
    };

    for (std::size_t i = 0; i < ds.segments.size(); ++i) {
        batch.push_back(i);
        if (batch.size() == batch_cap) {
            flush(batch);
            batch.clear();
        }
    }
    flush(batch);
    return m;
}

// Dataset-to-tensor helpers shared with the trainers; kept separate so this
// header does not pull in the training loop.
template <typename T>
Tensor<T> make_embed_text(const Dataset& ds, const std::vector<std::size_t>& idx,
                          std::size_t text_dim) {
    std::vector<T> buf(idx.size() * text_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Segment& s = ds.segments[idx[r]];
        if (s.phi.size() != text_dim)
            throw DataError("segment " + s.id + ": phi dimension mismatch");
        for (std::size_t i = 0; i < text_dim; ++i) buf[r * text_dim + i] = static_cast<T>(s.phi[i]);
    }
    return Tensor<T>::from_values({idx.size(), text_dim}, std::move(buf));
}

template <typename T>
Tensor<T> make_embed_images(const Dataset& ds, const std::vector<std::size_t>& idx,
                            std::size_t image_size) {
    const std::size_t per = 3 * image_size * image_size;
    std::vector<T> buf(idx.size() * per);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Segment& s = ds.segments[idx[r]];
        if (s.representative.size() != per)
            throw DataError("segment " + s.id + ": image size mismatch");
        for (std::size_t i = 0; i < per; ++i) buf[r * per + i] = static_cast<T>(s.representative[i]);
    }
    return Tensor<T>::from_values({idx.size(), 3, image_size, image_size}, std::move(buf));
}

template <typename T>
Tensor<T> make_embed_visual(const Dataset& ds, const std::vector<std::size_t>& idx,
                            std::size_t visual_dim) {
    std::vector<T> buf(idx.size() * visual_dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Segment& s = ds.segments[idx[r]];
        if (!s.has_visual_feature())
            throw DataError("segment " + s.id + ": missing visual feature");
        if (s.visual_feature.size() != visual_dim)
            throw DataError("segment " + s.id + ": visual feature dimension mismatch");
        for (std::size_t i = 0; i < visual_dim; ++i)
            buf[r * visual_dim + i] = static_cast<T>(s.visual_feature[i]);
    }
    return Tensor<T>::from_values({idx.size(), visual_dim}, std::move(buf));
}

} // namespace ganlink
