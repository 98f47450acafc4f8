#include "ganlink/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ganlink {

std::pair<std::size_t, Image> select_representative_keyframe(const std::vector<Image>& frames) {
    if (frames.empty()) throw DataError("select_representative_keyframe: no frames");
    const std::size_t w = frames[0].width, h = frames[0].height;
    for (const Image& f : frames)
        if (f.width != w || f.height != h)
            throw DataError("select_representative_keyframe: mismatched frame dimensions");

    const std::size_t n = frames.size();
    const std::size_t bytes = 3 * w * h;
    std::vector<std::uint8_t> median(bytes);
    std::vector<std::uint8_t> column(n);
    for (std::size_t i = 0; i < bytes; ++i) {
        for (std::size_t f = 0; f < n; ++f) column[f] = frames[f].pixels[i];
        std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>((n - 1) / 2),
                         column.end());
        median[i] = column[(n - 1) / 2]; // lower median for even counts
    }

    std::size_t best = 0;
    std::uint64_t best_dist = UINT64_MAX;
    for (std::size_t f = 0; f < n; ++f) {
        std::uint64_t dist = 0;
        for (std::size_t i = 0; i < bytes; ++i) {
            const int d = static_cast<int>(frames[f].pixels[i]) - static_cast<int>(median[i]);
            dist += static_cast<std::uint64_t>(d < 0 ? -d : d);
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = f;
        }
    }
    return {best, frames[best]};
}

namespace {

// Area-averaged resampling of one channel plane from (w,h) to (nw,nh).
// Each output pixel averages the fractional source box it covers.
void resample_plane(const std::uint8_t* src, std::size_t w, std::size_t h, int channel_stride,
                    std::size_t nw, std::size_t nh, float* dst) {
    const double sx = static_cast<double>(w) / static_cast<double>(nw);
    const double sy = static_cast<double>(h) / static_cast<double>(nh);
    for (std::size_t oy = 0; oy < nh; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const std::size_t ry0 = static_cast<std::size_t>(y0);
        const std::size_t ry1 = std::min(h, static_cast<std::size_t>(std::ceil(y1)));
        for (std::size_t ox = 0; ox < nw; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const std::size_t rx0 = static_cast<std::size_t>(x0);
            const std::size_t rx1 = std::min(w, static_cast<std::size_t>(std::ceil(x1)));
            double acc = 0, area = 0;
            for (std::size_t yy = ry0; yy < ry1; ++yy) {
                const double wy =
                    std::min<double>(y1, static_cast<double>(yy) + 1.0) - std::max<double>(y0, yy);
                for (std::size_t xx = rx0; xx < rx1; ++xx) {
                    const double wx = std::min<double>(x1, static_cast<double>(xx) + 1.0) -
                                      std::max<double>(x0, xx);
                    acc += wy * wx * src[(yy * w + xx) * static_cast<std::size_t>(channel_stride)];
                    area += wy * wx;
                }
            }
            dst[oy * nw + ox] = static_cast<float>(acc / area);
        }
    }
}

} // namespace

std::vector<float> preprocess_image(const Image& image, std::size_t target) {
    if (image.width == 0 || image.height == 0 || image.pixels.empty())
        throw DataError("preprocess_image: degenerate input image");
    if (target == 0) throw UsageError("preprocess_image: target must be positive");

    const std::size_t plane = target * target;
    std::vector<float> out(3 * plane);

    if (image.width == target && image.height == target) {
        // Already the right size: map values only.
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                out[c * plane + i] = static_cast<float>(image.pixels[i * 3 + c]) / 127.5f - 1.0f;
        return out;
    }

    // Scale the shorter side to `target`.
    std::size_t nw, nh;
    if (image.height <= image.width) {
        nh = target;
        nw = static_cast<std::size_t>(std::lround(
            static_cast<double>(image.width) * static_cast<double>(target) / image.height));
    } else {
        nw = target;
        nh = static_cast<std::size_t>(std::lround(
            static_cast<double>(image.height) * static_cast<double>(target) / image.width));
    }
    if (nw < target || nh < target)
        throw DataError("preprocess_image: image smaller than target after scaling");

    std::vector<float> scaled(3 * nw * nh);
    for (std::size_t c = 0; c < 3; ++c)
        resample_plane(image.pixels.data() + c, image.width, image.height, 3, nw, nh,
                       scaled.data() + c * nw * nh);

    const std::size_t off_x = (nw - target) / 2;
    const std::size_t off_y = (nh - target) / 2;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < target; ++y)
            for (std::size_t x = 0; x < target; ++x)
                out[c * plane + y * target + x] =
                    scaled[c * nw * nh + (y + off_y) * nw + (x + off_x)] / 127.5f - 1.0f;
    return out;
}

std::pair<std::vector<float>, double> average_word_embeddings(
    const std::vector<std::string>& words, const Vocabulary& vocab) {
    std::vector<float> acc(vocab.dim, 0.0f);
    std::size_t matched = 0;
    for (const std::string& w : words) {
        auto it = vocab.table.find(w);
        if (it == vocab.table.end()) continue;
        ++matched;
        for (std::size_t i = 0; i < vocab.dim; ++i) acc[i] += it->second[i];
    }
    if (matched > 0)
        for (float& v : acc) v /= static_cast<float>(matched);
    const double coverage =
        words.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(words.size());
    return {std::move(acc), coverage};
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary: " + path);
    Vocabulary vocab;
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        std::vector<float> vec;
        double v;
        while (ss >> v) vec.push_back(static_cast<float>(v));
        if (first) {
            first = false;
            // word2vec text files may start with a "count dim" header
            char* end = nullptr;
            const long maybe_count = std::strtol(word.c_str(), &end, 10);
            if (end && *end == '\0' && maybe_count > 0 && vec.size() == 1) continue;
        }
        if (vec.empty())
            throw FormatError(FormatError::Kind::corrupt,
                              "vocabulary line " + std::to_string(lineno) + " has no values");
        if (vocab.dim == 0) vocab.dim = vec.size();
        if (vec.size() != vocab.dim)
            throw FormatError(FormatError::Kind::corrupt,
                              "vocabulary dimension mismatch at line " + std::to_string(lineno));
        vocab.table[word] = std::move(vec);
    }
    return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << vocab.table.size() << " " << vocab.dim << "\n";
    out.precision(9);
    for (const auto& [word, vec] : vocab.table) {
        out << word;
        for (float v : vec) out << " " << v;
        out << "\n";
    }
}

Groundtruth load_groundtruth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open groundtruth: " + path);
    Groundtruth gt;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            throw FormatError(FormatError::Kind::corrupt,
                              "groundtruth line " + std::to_string(lineno) +
                                  " is not anchor<TAB>target");
        gt.relevant[line.substr(0, tab)].insert(line.substr(tab + 1));
    }
    return gt;
}

void save_groundtruth(const Groundtruth& gt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& [anchor, targets] : gt.relevant)
        for (const std::string& t : targets) out << anchor << "\t" << t << "\n";
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return path.string();
    return (base / path).string();
}

} // namespace

Dataset load_dataset(const std::string& manifest_path, std::size_t image_size) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset ds;
    Vocabulary vocab;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t lineno = 0;
    bool any_record = false;

    auto drop = [&](const std::string& id, const std::string& why) {
        ds.dropped += 1;
        ds.drop_log.push_back(id.empty() ? why : id + ": " + why);
    };

    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.is_object())
            throw DataError("manifest line " + std::to_string(lineno) + ": not an object");

        if (!rec.contains("id")) {
            if (rec.contains("vocab")) {
                vocab = load_vocabulary(resolve(base, rec["vocab"].get<std::string>()));
                continue;
            }
            throw DataError("manifest line " + std::to_string(lineno) + ": record without id");
        }
        any_record = true;

        Segment seg;
        try {
            seg.id = rec["id"].get<std::string>();
            if (seg.id.empty()) throw DataError("empty id");
            if (!seen_ids.insert(seg.id).second)
                throw DataError("duplicate segment id: " + seg.id);

            if (rec.contains("phi")) {
                MmteTensor t = read_mmte(resolve(base, rec["phi"].get<std::string>()));
                seg.phi = std::move(t.values);
            } else if (rec.contains("words")) {
                if (vocab.empty())
                    throw DataError("record uses words but manifest declares no vocabulary");
                auto words = rec["words"].get<std::vector<std::string>>();
                seg.phi = average_word_embeddings(words, vocab).first;
            }

            if (rec.contains("keyframes")) {
                for (const auto& kf : rec["keyframes"])
                    seg.keyframes.push_back(read_ppm(resolve(base, kf.get<std::string>())));
            }

            if (rec.contains("visual")) {
                MmteTensor t = read_mmte(resolve(base, rec["visual"].get<std::string>()));
                seg.visual_feature = std::move(t.values);
            }

            if (!seg.has_phi()) {
                drop(seg.id, "missing text modality");
                continue;
            }
            if (seg.keyframes.empty()) {
                drop(seg.id, "missing keyframes");
                continue;
            }
            auto [idx, frame] = select_representative_keyframe(seg.keyframes);
            (void)idx;
            const std::size_t target =
                image_size > 0 ? image_size : std::min(frame.width, frame.height);
            seg.representative = preprocess_image(frame, target);
            seg.image_size = target;
        } catch (const Error& e) {
            drop(seg.id, e.what());
            continue;
        }
        ds.segments.push_back(std::move(seg));
    }

    if (!any_record) throw DataError("manifest has no records: " + manifest_path);
    if (ds.segments.empty())
        throw DataError("no segments survived loading " + manifest_path + " (" +
                        std::to_string(ds.dropped) + " dropped)");
    return ds;
}

void SyntheticSpec::validate() const {
    if (classes < 2) throw ConfigError("synthetic: need at least 2 classes");
    if (segments_per_class == 0 || image_size == 0 || text_dim == 0)
        throw ConfigError("synthetic: sizes must be positive");
    if (text_noise < 0 || pixel_noise < 0)
        throw ConfigError("synthetic: noise levels must be nonnegative");
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

double rgb_to_hue(double r, double g, double b) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    if (d <= 1e-12) return 0.0;
    double h;
    if (mx == r)
        h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
    return h;
}

double hue_distance(double a, double b) {
    double d = std::abs(a - b);
    d = d - std::floor(d);
    return std::min(d, 1.0 - d);
}

SyntheticData generate_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticData data;
    const std::size_t S = spec.image_size;
    const std::size_t plane = S * S;

    // Class text prototypes: random unit vectors, resampled until every pair
    // has cosine <= 0.3.
    std::size_t attempts = 0;
    while (data.prototypes.size() < spec.classes) {
        if (++attempts > 10000)
            throw DataError("synthetic: could not separate class prototypes after 10^4 resamples");
        std::vector<float> cand(spec.text_dim);
        double norm = 0;
        for (float& v : cand) {
            v = static_cast<float>(normal(rng));
            norm += static_cast<double>(v) * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9) continue;
        for (float& v : cand) v = static_cast<float>(v / norm);
        bool ok = true;
        for (const auto& p : data.prototypes) {
            double dot = 0;
            for (std::size_t i = 0; i < spec.text_dim; ++i)
                dot += static_cast<double>(p[i]) * cand[i];
            if (dot > 0.3) {
                ok = false;
                break;
            }
        }
        if (ok) data.prototypes.push_back(std::move(cand));
    }

    // Class motifs: a solid class-hue background and a bright square whose
    // position walks a grid of cells, one cell per class.
    const std::size_t grid =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.classes))));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const double hue = static_cast<double>(c) / static_cast<double>(spec.classes);
        data.class_hues.push_back(static_cast<float>(hue));
        double r, g, b;
        hsv_to_rgb(hue, 0.9, 0.6, r, g, b);
        std::vector<float> motif(3 * plane);
        const float bg[3] = {static_cast<float>(2 * r - 1), static_cast<float>(2 * g - 1),
                             static_cast<float>(2 * b - 1)};
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < plane; ++i) motif[ch * plane + i] = bg[ch];

        const std::size_t cell = std::max<std::size_t>(1, S / grid);
        const std::size_t row = c / grid, col = c % grid;
        const std::size_t side = std::max<std::size_t>(1, cell / 2);
        const std::size_t y0 = std::min(S - side, row * cell + cell / 4);
        const std::size_t x0 = std::min(S - side, col * cell + cell / 4);
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = y0; y < y0 + side; ++y)
                for (std::size_t x = x0; x < x0 + side; ++x)
                    motif[ch * plane + y * S + x] = 0.9f;
        data.class_motifs.push_back(std::move(motif));
    }

    data.vocabulary.dim = spec.text_dim;
    for (std::size_t c = 0; c < spec.classes; ++c)
        data.vocabulary.table["class" + std::to_string(c)] = data.prototypes[c];

    char idbuf[32];
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t s = 0; s < spec.segments_per_class; ++s) {
            std::snprintf(idbuf, sizeof(idbuf), "c%02zu_s%04zu", c, s);
            Segment seg;
            seg.id = idbuf;
            seg.phi.resize(spec.text_dim);
            for (std::size_t i = 0; i < spec.text_dim; ++i)
                seg.phi[i] = data.prototypes[c][i] +
                             static_cast<float>(normal(rng) * spec.text_noise);
            seg.representative.resize(3 * plane);
            for (std::size_t i = 0; i < 3 * plane; ++i) {
                const double v = static_cast<double>(data.class_motifs[c][i]) +
                                 normal(rng) * spec.pixel_noise;
                seg.representative[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
            seg.image_size = S;
            seg.visual_feature = seg.representative; // stand-in for a precomputed descriptor
            data.dataset.segments.push_back(std::move(seg));
        }
    }

    for (std::size_t c = 0; c < spec.classes; ++c)
        for (std::size_t i = 0; i < spec.segments_per_class; ++i)
            for (std::size_t j = 0; j < spec.segments_per_class; ++j) {
                if (i == j) continue;
                const std::size_t a = c * spec.segments_per_class + i;
                const std::size_t t = c * spec.segments_per_class + j;
                data.groundtruth.relevant[data.dataset.segments[a].id].insert(
                    data.dataset.segments[t].id);
            }

    return data;
}

std::string export_dataset(const SyntheticData& data, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root / "phi");
    fs::create_directories(root / "frames");
    fs::create_directories(root / "feat");

    save_vocabulary(data.vocabulary, (root / "vocab.txt").string());
    save_groundtruth(data.groundtruth, (root / "groundtruth.tsv").string());

    std::ofstream manifest(root / "manifest.jsonl");
    if (!manifest) throw IoError("cannot open for writing: " + (root / "manifest.jsonl").string());
    manifest << json{{"vocab", "vocab.txt"}}.dump() << "\n";

    for (const Segment& seg : data.dataset.segments) {
        const std::string phi_rel = "phi/" + seg.id + ".mmte";
        const std::string frame_rel = "frames/" + seg.id + ".ppm";
        const std::string feat_rel = "feat/" + seg.id + ".mmte";
        write_mmte((root / phi_rel).string(), {seg.phi.size()}, seg.phi);
        write_ppm((root / frame_rel).string(),
                  planar_to_image(seg.representative, seg.image_size, seg.image_size));
        json rec{{"id", seg.id}, {"phi", phi_rel}, {"keyframes", json::array({frame_rel})}};
        if (seg.has_visual_feature()) {
            write_mmte((root / feat_rel).string(), {seg.visual_feature.size()},
                       seg.visual_feature);
            rec["visual"] = feat_rel;
        }
        manifest << rec.dump() << "\n";
    }
    return (root / "manifest.jsonl").string();
}

} // namespace ganlink
