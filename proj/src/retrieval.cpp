#include "ganlink/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ganlink {

double cosine_distance(std::span<const float> a, std::span<const float> b, bool* degenerate) {
    if (a.size() != b.size())
        throw UsageError("cosine_distance: dimension mismatch " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    if (degenerate) *degenerate = false;
    const double d = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(d, 0.0, 2.0);
}

std::vector<RankedTarget> rank_targets(const std::string& anchor_id,
                                       const EmbeddingMatrix& embeddings, std::size_t k) {
    const auto anchor = embeddings.index_of(anchor_id);
    if (!anchor) throw DataError("rank_targets: unknown anchor " + anchor_id);
    if (embeddings.count() < 2) throw DataError("rank_targets: corpus has no targets");
    if (k > embeddings.count() - 1)
        throw UsageError("rank_targets: k " + std::to_string(k) + " exceeds corpus-1");

    std::vector<RankedTarget> all;
    all.reserve(embeddings.count() - 1);
    const auto a = embeddings.row(*anchor);
    for (std::size_t i = 0; i < embeddings.count(); ++i) {
        if (i == *anchor) continue;
        all.push_back({embeddings.ids[i], cosine_distance(a, embeddings.row(i))});
    }
    std::sort(all.begin(), all.end(), [](const RankedTarget& x, const RankedTarget& y) {
        if (x.distance != y.distance) return x.distance < y.distance;
        return x.id < y.id;
    });
    all.resize(k);
    return all;
}

double precision_at_k(const std::vector<std::string>& ranking,
                      const std::set<std::string>& relevant, std::size_t k) {
    if (k == 0) throw UsageError("precision_at_k: k must be >= 1");
    std::size_t hits = 0;
    const std::size_t top = std::min(k, ranking.size());
    for (std::size_t i = 0; i < top; ++i)
        if (relevant.count(ranking[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
}

EvalReport make_report(std::size_t k, const std::string& source,
                       std::vector<std::vector<double>> per_anchor_per_run) {
    if (per_anchor_per_run.empty()) throw UsageError("make_report: need at least one run");
    EvalReport rep;
    rep.k = k;
    rep.source = source;
    rep.runs = per_anchor_per_run.size();
    for (const auto& run : per_anchor_per_run) {
        if (run.empty()) throw UsageError("make_report: run with no anchors");
        double acc = 0;
        for (double v : run) acc += v;
        rep.run_means.push_back(acc / static_cast<double>(run.size()));
    }
    rep.per_anchor_per_run = std::move(per_anchor_per_run);

    double mean = 0;
    for (double m : rep.run_means) mean += m;
    mean /= static_cast<double>(rep.runs);
    rep.mean_percent = 100.0 * mean;
    if (rep.runs >= 2) {
        double ss = 0;
        for (double m : rep.run_means) ss += (m - mean) * (m - mean);
        rep.sigma_percent = 100.0 * std::sqrt(ss / static_cast<double>(rep.runs - 1));
    }
    return rep;
}

EvalReport evaluate(const std::vector<EmbeddingMatrix>& runs, const Groundtruth& gt,
                    std::size_t k) {
    if (runs.empty()) throw UsageError("evaluate: need at least one run");

    std::vector<std::string> anchors;
    std::size_t skipped = 0;
    for (const std::string& id : runs[0].ids) {
        auto it = gt.relevant.find(id);
        if (it == gt.relevant.end() || it->second.empty()) {
            ++skipped;
            continue;
        }
        anchors.push_back(id);
    }
    if (anchors.empty()) throw DataError("evaluate: no anchor has groundtruth entries");
    for (const EmbeddingMatrix& run : runs)
        for (const std::string& a : anchors)
            if (!run.index_of(a))
                throw DataError("evaluate: anchor " + a + " missing from run " + run.source);

    std::vector<std::vector<double>> per_run;
    for (const EmbeddingMatrix& run : runs) {
        std::vector<double> vals;
        vals.reserve(anchors.size());
        for (const std::string& a : anchors) {
            const auto ranked = rank_targets(a, run, std::min(k, run.count() - 1));
            std::vector<std::string> ids;
            ids.reserve(ranked.size());
            for (const auto& r : ranked) ids.push_back(r.id);
            vals.push_back(precision_at_k(ids, gt.relevant.at(a), k));
        }
        per_run.push_back(std::move(vals));
    }
    EvalReport rep = make_report(k, runs[0].source, std::move(per_run));
    rep.skipped_anchors = skipped;
    return rep;
}

std::string report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    std::size_t name_w = 14;
    for (const EvalReport& r : reports) name_w = std::max(name_w, r.source.size() + 2);
    out << std::left << std::setw(static_cast<int>(name_w)) << "Representation" << std::right
        << std::setw(10) << "P@K (%)" << std::setw(12) << "sigma (%)" << std::setw(7) << "runs"
        << "\n";
    out << std::string(name_w + 29, '-') << "\n";
    for (const EvalReport& r : reports) {
        out << std::left << std::setw(static_cast<int>(name_w)) << r.source << std::right
            << std::setw(10) << std::fixed << std::setprecision(2) << r.mean_percent;
        if (std::isnan(r.sigma_percent))
            out << std::setw(12) << "-";
        else
            out << std::setw(12) << std::fixed << std::setprecision(2) << r.sigma_percent;
        out << std::setw(7) << r.runs << "\n";
    }
    return out.str();
}

std::string report_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "source,k,runs,mean_percent,sigma_percent\n";
    for (const EvalReport& r : reports) {
        out << r.source << "," << r.k << "," << r.runs << "," << std::fixed
            << std::setprecision(6) << r.mean_percent << ",";
        if (!std::isnan(r.sigma_percent)) out << std::fixed << std::setprecision(6) << r.sigma_percent;
        out << "\n";
    }
    return out.str();
}

void save_embeddings(const EmbeddingMatrix& m, const std::string& path) {
    if (m.ids.size() * m.dim != m.rows.size())
        throw UsageError("save_embeddings: inconsistent matrix");
    write_mmte(path, {m.ids.size(), m.dim}, m.rows);
    std::ofstream ids(path + ".ids");
    if (!ids) throw IoError("cannot open for writing: " + path + ".ids");
    for (const std::string& id : m.ids) ids << id << "\n";
}

EmbeddingMatrix load_embeddings(const std::string& path) {
    MmteTensor t = read_mmte(path);
    if (t.shape.size() != 2)
        throw FormatError(FormatError::Kind::corrupt,
                          "embedding file must be a rank-2 tensor: " + path);
    EmbeddingMatrix m;
    m.dim = t.shape[1];
    m.rows = std::move(t.values);
    std::ifstream ids(path + ".ids");
    if (!ids) throw IoError("cannot open id sidecar: " + path + ".ids");
    std::string line;
    while (std::getline(ids, line))
        if (!line.empty()) m.ids.push_back(line);
    if (m.ids.size() != t.shape[0])
        throw FormatError(FormatError::Kind::corrupt,
                          "id sidecar does not match row count: " + path);
    // Source label defaults to the file stem.
    const auto slash = path.find_last_of("/\\");
    std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
    const auto dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    m.source = stem;
    return m;
}

EmbeddingMatrix raw_embeddings(const Dataset& ds, RawSource source) {
    if (ds.segments.empty()) throw DataError("raw_embeddings: empty dataset");
    EmbeddingMatrix m;
    m.source = source == RawSource::text_only ? "text_only" : "visual_only";
    for (const Segment& s : ds.segments) {
        const std::vector<float>& row =
            source == RawSource::text_only ? s.phi : s.visual_feature;
        if (row.empty())
            throw DataError("segment " + s.id + ": missing " +
                            std::string(source == RawSource::text_only ? "text" : "visual") +
                            " modality");
        if (m.dim == 0) m.dim = row.size();
        if (row.size() != m.dim) throw DataError("segment " + s.id + ": dimension mismatch");
        m.ids.push_back(s.id);
        m.rows.insert(m.rows.end(), row.begin(), row.end());
    }
    return m;
}

} // namespace ganlink
