#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ganlink/io.hpp"

namespace ganlink {

// One video segment: text embedding phi plus imagery. The representative
// image is stored planar (3*S*S, channel-major) with values in [-1,1].
struct Segment {
    std::string id;
    std::vector<float> phi;
    std::vector<Image> keyframes;
    std::vector<float> representative;
    std::size_t image_size = 0;
    std::vector<float> visual_feature; // empty when absent

    bool has_phi() const { return !phi.empty(); }
    bool has_representative() const { return !representative.empty(); }
    bool has_visual_feature() const { return !visual_feature.empty(); }
};

struct Dataset {
    std::vector<Segment> segments;
    std::size_t dropped = 0;
    std::vector<std::string> drop_log;
};

struct Vocabulary {
    std::size_t dim = 0;
    std::map<std::string, std::vector<float>> table; // ordered for stable iteration

    bool empty() const { return table.empty(); }
    std::size_t size() const { return table.size(); }
};

struct Groundtruth {
    std::map<std::string, std::set<std::string>> relevant;
};

// --- keyframe selection and preprocessing ---------------------------------

// Returns the frame closest (L1 over all pixels/channels) to the per-pixel
// per-channel median image; ties resolve to the lowest index.
std::pair<std::size_t, Image> select_representative_keyframe(const std::vector<Image>& frames);

// Scales the shorter side to `target` by area averaging, center-crops to
// target x target and maps channel values to [-1,1] (v/127.5 - 1).
// Returns a planar float image.
std::vector<float> preprocess_image(const Image& image, std::size_t target);

// Elementwise mean of in-vocabulary word embeddings; second result is the
// fraction of words that were found. All words missing yields a zero vector.
std::pair<std::vector<float>, double> average_word_embeddings(
    const std::vector<std::string>& words, const Vocabulary& vocab);

// --- files ------------------------------------------------------------------

// Word2vec-style text vocabulary: optional "count dim" header line, then
// "word v1 v2 ... vD" per line.
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

// Tab-separated anchor/target pairs, one per line; presence marks relevance.
Groundtruth load_groundtruth(const std::string& path);
void save_groundtruth(const Groundtruth& gt, const std::string& path);

// Manifest: one JSON object per line. A record carries "id", a text source
// ("phi": MMTE path or "words": string list resolved against the manifest
// vocabulary), "keyframes": image paths, and optionally "visual": MMTE path.
// A line {"vocab": path} before the records selects the vocabulary. Paths are
// relative to the manifest. Segments lacking either modality are dropped and
// counted; the load is fatal only when nothing survives. image_size 0 keeps
// each representative at its frame's native (shorter-side) size.
Dataset load_dataset(const std::string& manifest_path, std::size_t image_size);

// --- synthetic verification data -------------------------------------------

struct SyntheticSpec {
    std::size_t classes = 4;
    std::size_t segments_per_class = 100;
    std::size_t image_size = 16;
    std::size_t text_dim = 32;
    double text_noise = 0.1;
    double pixel_noise = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticData {
    Dataset dataset;
    Groundtruth groundtruth;
    Vocabulary vocabulary;
    std::vector<std::vector<float>> prototypes;  // unit text vector per class
    std::vector<float> class_hues;               // background hue per class, in [0,1)
    std::vector<std::vector<float>> class_motifs; // clean planar motif per class
};

// Paired-modality dataset with one class-specific text prototype (pairwise
// cosine <= 0.3) and one image motif (class-hue background, bright square at
// a class-specific position) per class. Segments add Gaussian noise to both.
// The visual feature is the flattened noisy image, standing in for a
// precomputed descriptor.
SyntheticData generate_synthetic_dataset(const SyntheticSpec& spec);

// Writes manifest + phi/frames/feature files + vocabulary + groundtruth under
// `dir`; returns the manifest path.
std::string export_dataset(const SyntheticData& data, const std::string& dir);

// --- color helpers (used by the synthetic motifs) ---------------------------

// h in [0,1), s,v in [0,1] -> rgb in [0,1].
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);
// rgb in [0,1] -> hue in [0,1); returns 0 for gray pixels.
double rgb_to_hue(double r, double g, double b);
// Circular distance between two hues in [0,1).
double hue_distance(double a, double b);

} // namespace ganlink
