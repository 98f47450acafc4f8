#pragma once

#include <map>
#include <string>
#include <vector>

#include "ganlink/conv.hpp"
#include "ganlink/optim.hpp"
#include "ganlink/tensor.hpp"

namespace ganlink {

enum class ModelKind { cgan, ae, bidnn };

inline std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::cgan: return "cgan";
        case ModelKind::ae: return "ae";
        case ModelKind::bidnn: return "bidnn";
    }
    return "?";
}

inline ModelKind model_kind_from_name(const std::string& name) {
    if (name == "cgan") return ModelKind::cgan;
    if (name == "ae") return ModelKind::ae;
    if (name == "bidnn") return ModelKind::bidnn;
    throw ConfigError("unknown model kind: " + name);
}

// Generator: text fc + leaky-ReLU, concat with noise, projection to a 4x4
// grid, one stride-2 deconv per entry of deconv_maps, 3x3 conv to RGB, tanh.
struct GeneratorConfig {
    std::size_t noise_dim = 10;
    std::size_t text_dim = 100;
    std::size_t text_fc = 256;
    std::vector<std::size_t> deconv_maps = {256, 128, 64, 32};
    std::size_t image_size = 64;
    std::size_t channels = 3;

    std::size_t start_channels() const { return 2 * deconv_maps.front(); }

    void validate() const {
        if (noise_dim == 0 || text_dim == 0 || text_fc == 0 || channels == 0)
            throw ConfigError("generator: dimensions must be positive");
        if (deconv_maps.empty()) throw ConfigError("generator: deconv_maps must be nonempty");
        for (std::size_t m : deconv_maps)
            if (m == 0) throw ConfigError("generator: deconv_maps entries must be positive");
        // 4x4 start doubled once per deconv stage must land on image_size.
        std::size_t out = 4;
        for (std::size_t i = 0; i < deconv_maps.size(); ++i) out *= 2;
        if (out != image_size)
            throw ConfigError("generator: image_size " + std::to_string(image_size) +
                              " is not 4*2^" + std::to_string(deconv_maps.size()));
    }
};

struct DiscriminatorConfig {
    std::vector<std::size_t> conv_maps = {32, 64, 128, 256};
    std::size_t text_dim = 100;
    std::size_t text_fc = 256;
    std::size_t join_maps = 256;
    std::size_t image_size = 64;

    std::size_t grid() const { return image_size >> conv_maps.size(); }
    std::size_t embedding_dim() const { return grid() * grid() * join_maps; }

    void validate() const {
        if (text_dim == 0 || text_fc == 0 || join_maps == 0)
            throw ConfigError("discriminator: dimensions must be positive");
        if (conv_maps.empty()) throw ConfigError("discriminator: conv_maps must be nonempty");
        for (std::size_t m : conv_maps)
            if (m == 0) throw ConfigError("discriminator: conv_maps entries must be positive");
        std::size_t s = image_size;
        for (std::size_t i = 0; i < conv_maps.size(); ++i) {
            if (s % 2 != 0 || s / 2 == 0)
                throw ConfigError("discriminator: image_size " + std::to_string(image_size) +
                                  " cannot be halved " + std::to_string(conv_maps.size()) +
                                  " times");
            s /= 2;
        }
    }
};

struct AEConfig {
    std::size_t text_dim = 100;
    std::size_t visual_dim = 4096;
    std::size_t branch = 1000;
    std::size_t hidden = 1000;
    // Probability of zeroing one randomly chosen modality per sample during
    // training; off by default.
    double modality_dropout = 0.0;

    void validate() const {
        if (text_dim == 0 || visual_dim == 0 || branch == 0 || hidden == 0)
            throw ConfigError("autoencoder: dimensions must be positive");
        if (modality_dropout < 0 || modality_dropout >= 1)
            throw ConfigError("autoencoder: modality_dropout must lie in [0,1)");
    }
};

struct BiDNNConfig {
    std::size_t text_dim = 100;
    std::size_t visual_dim = 4096;
    std::size_t hidden = 1000;

    void validate() const {
        if (text_dim == 0 || visual_dim == 0 || hidden == 0)
            throw ConfigError("bidnn: dimensions must be positive");
    }
};

// A built model: parameters, batchnorm running state, and the configs that
// shaped them. `params` holds the generator for CGANs and the whole network
// for the baselines; `disc_params` is CGAN-only.
template <typename T>
struct ModelBundle {
    ModelKind kind = ModelKind::cgan;
    GeneratorConfig gen_cfg;
    DiscriminatorConfig disc_cfg;
    AEConfig ae_cfg;
    BiDNNConfig bidnn_cfg;

    ParamSet<T> params;
    ParamSet<T> disc_params;
    std::map<std::string, BatchNormState<T>> bn;
    T bn_momentum = T(0.9);

    std::uint64_t seed = 0;
    std::uint64_t epochs_trained = 0;
    std::string tag;

    std::size_t parameter_count() const {
        return params.total_elements() + disc_params.total_elements();
    }

    std::size_t embedding_dim() const {
        switch (kind) {
            case ModelKind::cgan: return disc_cfg.embedding_dim();
            case ModelKind::ae: return ae_cfg.hidden;
            case ModelKind::bidnn: return 2 * bidnn_cfg.hidden;
        }
        return 0;
    }
};

template <typename T>
ModelBundle<T> build_cgan(const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                          std::uint64_t seed) {
    gen_cfg.validate();
    disc_cfg.validate();
    if (gen_cfg.text_dim != disc_cfg.text_dim)
        throw ConfigError("cgan: generator and discriminator disagree on text_dim");
    if (gen_cfg.image_size != disc_cfg.image_size)
        throw ConfigError("cgan: generator and discriminator disagree on image_size");

    ModelBundle<T> b;
    b.kind = ModelKind::cgan;
    b.gen_cfg = gen_cfg;
    b.disc_cfg = disc_cfg;
    b.seed = seed;
    b.tag = "cgan:seed" + std::to_string(seed);

    std::vector<ParamSpec> gspec;
    gspec.push_back({"gen.text.w", {gen_cfg.text_dim, gen_cfg.text_fc}, ParamInit::normal_002});
    gspec.push_back({"gen.text.b", {gen_cfg.text_fc}, ParamInit::zeros});
    const std::size_t c0 = gen_cfg.start_channels();
    gspec.push_back(
        {"gen.proj.w", {gen_cfg.noise_dim + gen_cfg.text_fc, c0 * 16}, ParamInit::normal_002});
    gspec.push_back({"gen.proj.b", {c0 * 16}, ParamInit::zeros});
    std::size_t in_c = c0;
    for (std::size_t i = 0; i < gen_cfg.deconv_maps.size(); ++i) {
        const std::size_t out_c = gen_cfg.deconv_maps[i];
        const std::string idx = std::to_string(i);
        gspec.push_back({"gen.deconv" + idx + ".k", {in_c, out_c, 4, 4}, ParamInit::normal_002});
        gspec.push_back({"gen.bn" + idx + ".gamma", {out_c}, ParamInit::ones});
        gspec.push_back({"gen.bn" + idx + ".beta", {out_c}, ParamInit::zeros});
        in_c = out_c;
    }
    gspec.push_back({"gen.out.k", {gen_cfg.channels, in_c, 3, 3}, ParamInit::normal_002});
    b.params = init_params<T>(gspec, seed);

    std::vector<ParamSpec> dspec;
    std::size_t d_in = gen_cfg.channels;
    for (std::size_t i = 0; i < disc_cfg.conv_maps.size(); ++i) {
        const std::size_t out_c = disc_cfg.conv_maps[i];
        const std::string idx = std::to_string(i);
        dspec.push_back({"disc.conv" + idx + ".k", {out_c, d_in, 4, 4}, ParamInit::normal_002});
        if (i > 0) {
            dspec.push_back({"disc.bn" + idx + ".gamma", {out_c}, ParamInit::ones});
            dspec.push_back({"disc.bn" + idx + ".beta", {out_c}, ParamInit::zeros});
        }
        d_in = out_c;
    }
    dspec.push_back({"disc.text.w", {disc_cfg.text_dim, disc_cfg.text_fc}, ParamInit::normal_002});
    dspec.push_back({"disc.text.b", {disc_cfg.text_fc}, ParamInit::zeros});
    dspec.push_back({"disc.join.k",
                     {disc_cfg.join_maps, disc_cfg.conv_maps.back() + disc_cfg.text_fc, 1, 1},
                     ParamInit::normal_002});
    dspec.push_back({"disc.join_bn.gamma", {disc_cfg.join_maps}, ParamInit::ones});
    dspec.push_back({"disc.join_bn.beta", {disc_cfg.join_maps}, ParamInit::zeros});
    dspec.push_back({"disc.score.w", {disc_cfg.embedding_dim(), 1}, ParamInit::normal_002});
    dspec.push_back({"disc.score.b", {1}, ParamInit::zeros});
    // Offset the seed so generator and discriminator draws are independent.
    b.disc_params = init_params<T>(dspec, seed ^ 0x9e3779b97f4a7c15ull);

    for (std::size_t i = 0; i < gen_cfg.deconv_maps.size(); ++i)
        b.bn["gen.bn" + std::to_string(i)] = BatchNormState<T>::init(gen_cfg.deconv_maps[i]);
    for (std::size_t i = 1; i < disc_cfg.conv_maps.size(); ++i)
        b.bn["disc.bn" + std::to_string(i)] = BatchNormState<T>::init(disc_cfg.conv_maps[i]);
    b.bn["disc.join_bn"] = BatchNormState<T>::init(disc_cfg.join_maps);
    return b;
}

template <typename T>
ModelBundle<T> build_ae(const AEConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelBundle<T> b;
    b.kind = ModelKind::ae;
    b.ae_cfg = cfg;
    b.seed = seed;
    b.tag = "ae:seed" + std::to_string(seed);
    std::vector<ParamSpec> spec = {
        {"ae.enc_text.w", {cfg.text_dim, cfg.branch}, ParamInit::normal_002},
        {"ae.enc_text.b", {cfg.branch}, ParamInit::zeros},
        {"ae.enc_vis.w", {cfg.visual_dim, cfg.branch}, ParamInit::normal_002},
        {"ae.enc_vis.b", {cfg.branch}, ParamInit::zeros},
        {"ae.code.w", {2 * cfg.branch, cfg.hidden}, ParamInit::normal_002},
        {"ae.code.b", {cfg.hidden}, ParamInit::zeros},
        {"ae.dec_text1.w", {cfg.hidden, cfg.branch}, ParamInit::normal_002},
        {"ae.dec_text1.b", {cfg.branch}, ParamInit::zeros},
        {"ae.dec_text2.w", {cfg.branch, cfg.text_dim}, ParamInit::normal_002},
        {"ae.dec_text2.b", {cfg.text_dim}, ParamInit::zeros},
        {"ae.dec_vis1.w", {cfg.hidden, cfg.branch}, ParamInit::normal_002},
        {"ae.dec_vis1.b", {cfg.branch}, ParamInit::zeros},
        {"ae.dec_vis2.w", {cfg.branch, cfg.visual_dim}, ParamInit::normal_002},
        {"ae.dec_vis2.b", {cfg.visual_dim}, ParamInit::zeros},
    };
    b.params = init_params<T>(spec, seed);
    return b;
}

template <typename T>
ModelBundle<T> build_bidnn(const BiDNNConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelBundle<T> b;
    b.kind = ModelKind::bidnn;
    b.bidnn_cfg = cfg;
    b.seed = seed;
    b.tag = "bidnn:seed" + std::to_string(seed);
    std::vector<ParamSpec> spec = {
        {"bidnn.t2v_in.w", {cfg.text_dim, cfg.hidden}, ParamInit::normal_002},
        {"bidnn.t2v_in.b", {cfg.hidden}, ParamInit::zeros},
        {"bidnn.v2t_in.w", {cfg.visual_dim, cfg.hidden}, ParamInit::normal_002},
        {"bidnn.v2t_in.b", {cfg.hidden}, ParamInit::zeros},
        // One central matrix, used as-is in one direction and transposed in
        // the other; only the biases are per-direction.
        {"bidnn.center.w", {cfg.hidden, cfg.hidden}, ParamInit::normal_002},
        {"bidnn.t2v_center.b", {cfg.hidden}, ParamInit::zeros},
        {"bidnn.v2t_center.b", {cfg.hidden}, ParamInit::zeros},
        {"bidnn.t2v_out.w", {cfg.hidden, cfg.visual_dim}, ParamInit::normal_002},
        {"bidnn.t2v_out.b", {cfg.visual_dim}, ParamInit::zeros},
        {"bidnn.v2t_out.w", {cfg.hidden, cfg.text_dim}, ParamInit::normal_002},
        {"bidnn.v2t_out.b", {cfg.text_dim}, ParamInit::zeros},
    };
    b.params = init_params<T>(spec, seed);
    return b;
}

inline constexpr double kLeakySlope = 0.2;

// x_hat = G(z, phi). z must lie in [-1,1]; output is tanh-bounded.
template <typename T>
Tensor<T> generator_forward(ModelBundle<T>& bundle, const Tensor<T>& z, const Tensor<T>& phi,
                            Mode mode) {
    if (bundle.kind != ModelKind::cgan)
        throw UsageError("generator_forward: bundle is not a cgan");
    const GeneratorConfig& cfg = bundle.gen_cfg;
    if (z.ndim() != 2 || z.dim(1) != cfg.noise_dim)
        throw UsageError("generator_forward: z must be [N x " + std::to_string(cfg.noise_dim) +
                         "], got " + shape_str(z.shape()));
    if (phi.ndim() != 2 || phi.dim(1) != cfg.text_dim || phi.dim(0) != z.dim(0))
        throw UsageError("generator_forward: phi must be [N x " + std::to_string(cfg.text_dim) +
                         "], got " + shape_str(phi.shape()));
    for (T v : z.values())
        if (v < T(-1) || v > T(1)) throw DataError("generator_forward: z outside [-1,1]");

    const std::size_t n = z.dim(0);
    const T slope = static_cast<T>(kLeakySlope);
    ParamSet<T>& p = bundle.params;

    Tensor<T> t = leaky_relu(dense(phi, p.at("gen.text.w"), p.at("gen.text.b")), slope);
    Tensor<T> h = concat<T>({z, t}, 1);
    h = dense(h, p.at("gen.proj.w"), p.at("gen.proj.b"));
    h = reshape(h, {n, cfg.start_channels(), 4, 4});
    for (std::size_t i = 0; i < cfg.deconv_maps.size(); ++i) {
        const std::string idx = std::to_string(i);
        h = deconv2d(h, p.at("gen.deconv" + idx + ".k"), 2, 1);
        h = batchnorm(h, p.at("gen.bn" + idx + ".gamma"), p.at("gen.bn" + idx + ".beta"), mode,
                      bundle.bn.at("gen.bn" + idx), bundle.bn_momentum);
        h = leaky_relu(h, slope);
    }
    return tanh_act(conv2d(h, p.at("gen.out.k"), 1, 1));
}

template <typename T>
struct DiscriminatorOut {
    Tensor<T> score;     // [N], sigmoid output in (0,1)
    Tensor<T> embedding; // [N x grid^2*join_maps], raw join-conv output
};

// D(x, phi). The multimodal embedding is the flattened output of the 1x1
// join convolution, tapped before its batchnorm and activation.
template <typename T>
DiscriminatorOut<T> discriminator_forward(ModelBundle<T>& bundle, const Tensor<T>& image,
                                          const Tensor<T>& phi, Mode mode) {
    if (bundle.kind != ModelKind::cgan)
        throw UsageError("discriminator_forward: bundle is not a cgan");
    const DiscriminatorConfig& cfg = bundle.disc_cfg;
    if (image.ndim() != 4 || image.dim(1) != bundle.gen_cfg.channels ||
        image.dim(2) != cfg.image_size || image.dim(3) != cfg.image_size)
        throw UsageError("discriminator_forward: image must be [N x " +
                         std::to_string(bundle.gen_cfg.channels) + " x " +
                         std::to_string(cfg.image_size) + " x " +
                         std::to_string(cfg.image_size) + "], got " + shape_str(image.shape()));
    if (phi.ndim() != 2 || phi.dim(1) != cfg.text_dim || phi.dim(0) != image.dim(0))
        throw UsageError("discriminator_forward: phi shape mismatch " + shape_str(phi.shape()));

    const std::size_t n = image.dim(0);
    const T slope = static_cast<T>(kLeakySlope);
    ParamSet<T>& p = bundle.disc_params;

    Tensor<T> h = image;
    for (std::size_t i = 0; i < cfg.conv_maps.size(); ++i) {
        const std::string idx = std::to_string(i);
        h = conv2d(h, p.at("disc.conv" + idx + ".k"), 2, 1);
        if (i > 0)
            h = batchnorm(h, p.at("disc.bn" + idx + ".gamma"), p.at("disc.bn" + idx + ".beta"),
                          mode, bundle.bn.at("disc.bn" + idx), bundle.bn_momentum);
        h = leaky_relu(h, slope);
    }

    Tensor<T> t = leaky_relu(dense(phi, p.at("disc.text.w"), p.at("disc.text.b")), slope);
    Tensor<T> tt = tile_spatial(t, cfg.grid(), cfg.grid());
    Tensor<T> joined = concat<T>({h, tt}, 1);
    Tensor<T> raw = conv2d(joined, p.at("disc.join.k"), 1, 0);

    DiscriminatorOut<T> out;
    out.embedding = reshape(raw, {n, cfg.embedding_dim()});

    Tensor<T> s = batchnorm(raw, p.at("disc.join_bn.gamma"), p.at("disc.join_bn.beta"), mode,
                            bundle.bn.at("disc.join_bn"), bundle.bn_momentum);
    s = leaky_relu(s, slope);
    s = reshape(s, {n, cfg.embedding_dim()});
    s = sigmoid_act(dense(s, p.at("disc.score.w"), p.at("disc.score.b")));
    out.score = reshape(s, {n});
    return out;
}

template <typename T>
struct AeOut {
    Tensor<T> text_rec;
    Tensor<T> visual_rec;
    Tensor<T> embedding; // [N x hidden], tanh activation of the shared layer
};

template <typename T>
AeOut<T> ae_forward(ModelBundle<T>& bundle, const Tensor<T>& text, const Tensor<T>& visual) {
    if (bundle.kind != ModelKind::ae) throw UsageError("ae_forward: bundle is not an autoencoder");
    const AEConfig& cfg = bundle.ae_cfg;
    if (text.ndim() != 2 || text.dim(1) != cfg.text_dim)
        throw UsageError("ae_forward: text shape mismatch " + shape_str(text.shape()));
    if (visual.ndim() != 2 || visual.dim(1) != cfg.visual_dim || visual.dim(0) != text.dim(0))
        throw UsageError("ae_forward: visual shape mismatch " + shape_str(visual.shape()));

    const T slope = static_cast<T>(kLeakySlope);
    ParamSet<T>& p = bundle.params;
    Tensor<T> et = leaky_relu(dense(text, p.at("ae.enc_text.w"), p.at("ae.enc_text.b")), slope);
    Tensor<T> ev = leaky_relu(dense(visual, p.at("ae.enc_vis.w"), p.at("ae.enc_vis.b")), slope);
    Tensor<T> code = tanh_act(dense(concat<T>({et, ev}, 1), p.at("ae.code.w"), p.at("ae.code.b")));

    AeOut<T> out;
    out.embedding = code;
    Tensor<T> dt = leaky_relu(dense(code, p.at("ae.dec_text1.w"), p.at("ae.dec_text1.b")), slope);
    out.text_rec = dense(dt, p.at("ae.dec_text2.w"), p.at("ae.dec_text2.b"));
    Tensor<T> dv = leaky_relu(dense(code, p.at("ae.dec_vis1.w"), p.at("ae.dec_vis1.b")), slope);
    out.visual_rec = dense(dv, p.at("ae.dec_vis2.w"), p.at("ae.dec_vis2.b"));
    return out;
}

enum class Presence { both, text_only, visual_only };

template <typename T>
struct BidnnOut {
    Tensor<T> visual_from_text; // text -> visual translation
    Tensor<T> text_from_visual; // visual -> text translation
    Tensor<T> embedding;        // [N x 2*hidden], the two central activations
};

// Two crossmodal translators with a shared central matrix, used as stored in
// the text->visual direction and transposed in the visual->text direction.
// An absent modality contributes zeros to its half of the embedding and a
// zero translation.
template <typename T>
BidnnOut<T> bidnn_forward(ModelBundle<T>& bundle, const Tensor<T>& text, const Tensor<T>& visual,
                          Presence present) {
    if (bundle.kind != ModelKind::bidnn) throw UsageError("bidnn_forward: bundle is not a bidnn");
    const BiDNNConfig& cfg = bundle.bidnn_cfg;
    const bool has_text = present != Presence::visual_only;
    const bool has_visual = present != Presence::text_only;
    if (!has_text && !has_visual) throw DataError("bidnn_forward: no modality present");
    if (has_text && (text.ndim() != 2 || text.dim(1) != cfg.text_dim))
        throw UsageError("bidnn_forward: text shape mismatch " + shape_str(text.shape()));
    if (has_visual && (visual.ndim() != 2 || visual.dim(1) != cfg.visual_dim))
        throw UsageError("bidnn_forward: visual shape mismatch " + shape_str(visual.shape()));
    if (has_text && has_visual && text.dim(0) != visual.dim(0))
        throw UsageError("bidnn_forward: batch size mismatch");

    const std::size_t n = has_text ? text.dim(0) : visual.dim(0);
    const T slope = static_cast<T>(kLeakySlope);
    ParamSet<T>& p = bundle.params;

    BidnnOut<T> out;
    Tensor<T> h_text, h_visual;
    if (has_text) {
        Tensor<T> a =
            leaky_relu(dense(text, p.at("bidnn.t2v_in.w"), p.at("bidnn.t2v_in.b")), slope);
        h_text = tanh_act(dense(a, p.at("bidnn.center.w"), p.at("bidnn.t2v_center.b")));
        out.visual_from_text = dense(h_text, p.at("bidnn.t2v_out.w"), p.at("bidnn.t2v_out.b"));
    } else {
        h_text = Tensor<T>::zeros({n, cfg.hidden});
        out.visual_from_text = Tensor<T>::zeros({n, cfg.visual_dim});
    }
    if (has_visual) {
        Tensor<T> b =
            leaky_relu(dense(visual, p.at("bidnn.v2t_in.w"), p.at("bidnn.v2t_in.b")), slope);
        h_visual =
            tanh_act(dense_transposed(b, p.at("bidnn.center.w"), p.at("bidnn.v2t_center.b")));
        out.text_from_visual = dense(h_visual, p.at("bidnn.v2t_out.w"), p.at("bidnn.v2t_out.b"));
    } else {
        h_visual = Tensor<T>::zeros({n, cfg.hidden});
        out.text_from_visual = Tensor<T>::zeros({n, cfg.text_dim});
    }
    out.embedding = concat<T>({h_text, h_visual}, 1);
    return out;
}

} // namespace ganlink
