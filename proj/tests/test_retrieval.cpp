#include <doctest.h>

#include <algorithm>
#include <random>

#include "ganlink/retrieval.hpp"
#include "ganlink/training.hpp"

using namespace ganlink;

namespace {

EmbeddingMatrix matrix_from_rows(const std::vector<std::string>& ids,
                                 const std::vector<std::vector<float>>& rows,
                                 const std::string& source = "test") {
    EmbeddingMatrix m;
    m.ids = ids;
    m.dim = rows[0].size();
    m.source = source;
    for (const auto& r : rows) m.rows.insert(m.rows.end(), r.begin(), r.end());
    return m;
}

// Brute-force oracle: full sort over explicit pairwise distances.
std::vector<std::string> brute_force_rank(const EmbeddingMatrix& m, const std::string& anchor,
                                          std::size_t k) {
    const std::size_t a = *m.index_of(anchor);
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < m.count(); ++i) {
        if (i == a) continue;
        all.emplace_back(cosine_distance(m.row(a), m.row(i)), m.ids[i]);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < k; ++i) ids.push_back(all[i].second);
    return ids;
}

} // namespace

TEST_CASE("cosine distance basics") {
    const std::vector<float> a = {1, 2, 3};
    const std::vector<float> b = {2, 4, 6};
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0));
    CHECK(cosine_distance(a, b) == doctest::Approx(0.0).epsilon(1e-6)); // scale invariance

    const std::vector<float> ex = {1, 0};
    const std::vector<float> ey = {0, 1};
    CHECK(cosine_distance(ex, ey) == doctest::Approx(1.0));

    bool degenerate = false;
    const std::vector<float> zero = {0, 0};
    CHECK(cosine_distance(zero, ex, &degenerate) == doctest::Approx(1.0));
    CHECK(degenerate);
}

TEST_CASE("rank_targets puts an identical target first with distance zero") {
    auto m = matrix_from_rows({"a", "b", "c"}, {{1, 0}, {1, 0}, {0, 1}});
    const auto ranked = rank_targets("a", m, 2);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].id == "b");
    CHECK(ranked[0].distance == doctest::Approx(0.0));
    CHECK(ranked[1].id == "c");
}

TEST_CASE("rank_targets breaks distance ties lexicographically") {
    auto m = matrix_from_rows({"q", "zz", "aa", "mm"},
                              {{1, 0}, {0, 1}, {0, 1}, {0, 1}});
    const auto ranked = rank_targets("q", m, 3);
    CHECK(ranked[0].id == "aa");
    CHECK(ranked[1].id == "mm");
    CHECK(ranked[2].id == "zz");
}

TEST_CASE("rank_targets rejects unknown anchors and oversized k") {
    auto m = matrix_from_rows({"a", "b"}, {{1, 0}, {0, 1}});
    CHECK_THROWS_AS(rank_targets("nope", m, 1), DataError);
    CHECK_THROWS_AS(rank_targets("a", m, 2), UsageError);
}

TEST_CASE("rank_targets equals the brute-force oracle on random corpora") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> dist(-1, 1);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::string> ids;
        std::vector<std::vector<float>> rows;
        for (int i = 0; i < 20; ++i) {
            ids.push_back("s" + std::to_string(i));
            std::vector<float> row(4);
            for (float& v : row) v = dist(rng);
            rows.push_back(row);
        }
        auto m = matrix_from_rows(ids, rows);
        const auto ranked = rank_targets("s0", m, 10);
        const auto oracle = brute_force_rank(m, "s0", 10);
        for (std::size_t i = 0; i < 10; ++i) REQUIRE(ranked[i].id == oracle[i]);
    }
}

TEST_CASE("ranking is invariant under positive row scaling") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> dist(-1, 1);
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows, scaled;
    for (int i = 0; i < 12; ++i) {
        ids.push_back("s" + std::to_string(i));
        std::vector<float> row(5);
        for (float& v : row) v = dist(rng);
        rows.push_back(row);
        std::vector<float> srow(5);
        for (int j = 0; j < 5; ++j) srow[j] = 7.5f * row[j];
        scaled.push_back(srow);
    }
    const auto r1 = rank_targets("s3", matrix_from_rows(ids, rows), 8);
    const auto r2 = rank_targets("s3", matrix_from_rows(ids, scaled), 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(r1[i].id == r2[i].id);
}

TEST_CASE("the anchor never appears in its own ranking") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> dist(-1, 1);
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 10; ++i) {
        ids.push_back("s" + std::to_string(i));
        std::vector<float> row(3);
        for (float& v : row) v = dist(rng);
        rows.push_back(row);
    }
    const auto ranked = rank_targets("s5", matrix_from_rows(ids, rows), 9);
    for (const auto& r : ranked) CHECK(r.id != "s5");
}

TEST_CASE("precision_at_k counts hits in the top k") {
    std::vector<std::string> ranking;
    for (int i = 0; i < 10; ++i) ranking.push_back("t" + std::to_string(i));
    std::set<std::string> relevant = {"t0", "t2", "t4", "t6", "t8", "t9"};
    CHECK(precision_at_k(ranking, relevant, 10) == doctest::Approx(0.6));
    CHECK(precision_at_k(ranking, {}, 10) == doctest::Approx(0.0));
    // Short rankings pad as nonrelevant.
    CHECK(precision_at_k({"t0"}, relevant, 10) == doctest::Approx(0.1));
    CHECK_THROWS_AS(precision_at_k(ranking, relevant, 0), UsageError);
}

TEST_CASE("precision_at_k matches a brute-force count on random instances") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<std::string> ranking;
        std::set<std::string> relevant;
        for (int i = 0; i < 15; ++i) {
            ranking.push_back("x" + std::to_string(i));
            if (coin(rng)) relevant.insert("x" + std::to_string(i));
        }
        std::size_t hits = 0;
        for (int i = 0; i < 10; ++i)
            if (relevant.count(ranking[i])) ++hits;
        CHECK(precision_at_k(ranking, relevant, 10) == doctest::Approx(hits / 10.0));
    }
}

TEST_CASE("precision is monotone when a top item becomes relevant") {
    std::vector<std::string> ranking = {"a", "b", "c", "d", "e"};
    std::set<std::string> relevant = {"a"};
    const double before = precision_at_k(ranking, relevant, 5);
    relevant.insert("c");
    CHECK(precision_at_k(ranking, relevant, 5) > before);
}

TEST_CASE("make_report computes the sample sigma across runs") {
    // Two runs whose per-anchor means are 0.5 and 0.7.
    std::vector<std::vector<double>> runs = {
        {0.4, 0.6},
        {0.7, 0.7},
    };
    EvalReport rep = make_report(10, "cgan", runs);
    CHECK(rep.mean_percent == doctest::Approx(60.0).epsilon(1e-9));
    CHECK(rep.sigma_percent == doctest::Approx(14.1421).epsilon(1e-4));
    CHECK(rep.runs == 2);
}

TEST_CASE("identical runs have sigma zero and single runs no sigma") {
    EvalReport rep = make_report(10, "ae", {{0.5, 0.7}, {0.5, 0.7}});
    CHECK(rep.sigma_percent == doctest::Approx(0.0));
    EvalReport single = make_report(10, "ae", {{0.5, 0.7}});
    CHECK(std::isnan(single.sigma_percent));
}

TEST_CASE("report table mirrors the comparison layout") {
    EvalReport rep = make_report(10, "cgan", {{0.6284 - 0.0136 / std::sqrt(2.0)},
                                              {0.6284 + 0.0136 / std::sqrt(2.0)}});
    const std::string table = report_table({rep});
    CHECK(table.find("cgan") != std::string::npos);
    CHECK(table.find("62.84") != std::string::npos);
    CHECK(table.find("1.36") != std::string::npos);
    const std::string csv = report_csv({rep});
    CHECK(csv.find("source,k,runs,mean_percent,sigma_percent") == 0);
}

TEST_CASE("evaluate agrees with direct precision_at_k calls") {
    // Pairs (a_i, b_i) of nearly identical vectors; b_i is a_i's only
    // relevant target. Distractor d_i sits closer than b_i for miss anchors.
    const std::size_t n_anchor = 10;
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    Groundtruth gt;
    auto direction = [](double angle) {
        return std::vector<float>{static_cast<float>(std::cos(angle)),
                                  static_cast<float>(std::sin(angle))};
    };
    std::set<std::size_t> miss = {1, 4, 7}; // these anchors get a closer distractor
    for (std::size_t i = 0; i < n_anchor; ++i) {
        const double base = 0.3 * static_cast<double>(i);
        ids.push_back("a" + std::to_string(i));
        rows.push_back(direction(base));
        ids.push_back("b" + std::to_string(i));
        rows.push_back(direction(base + 0.02));
        gt.relevant["a" + std::to_string(i)].insert("b" + std::to_string(i));
        if (miss.count(i)) {
            ids.push_back("d" + std::to_string(i));
            rows.push_back(direction(base + 0.01));
        }
    }
    auto m = matrix_from_rows(ids, rows, "fixture");
    EvalReport rep = evaluate({m}, gt, 1);
    CHECK(rep.runs == 1);
    // 7 of 10 anchors rank their b first.
    CHECK(rep.mean_percent == doctest::Approx(70.0));
    // Cross-check against direct calls.
    double acc = 0;
    for (std::size_t i = 0; i < n_anchor; ++i) {
        const std::string anchor = "a" + std::to_string(i);
        const auto ranked = rank_targets(anchor, m, 1);
        acc += precision_at_k({ranked[0].id}, gt.relevant.at(anchor), 1);
    }
    CHECK(rep.mean_percent == doctest::Approx(100.0 * acc / n_anchor));
    // Anchors without groundtruth (the b and d rows) were skipped.
    CHECK(rep.skipped_anchors == ids.size() - n_anchor);
}

TEST_CASE("zero-vector embeddings rank last instead of failing") {
    auto m = matrix_from_rows({"a", "b", "z"}, {{1, 0}, {0.9f, 0.1f}, {0, 0}});
    const auto ranked = rank_targets("a", m, 2);
    CHECK(ranked[0].id == "b");
    CHECK(ranked[1].id == "z");
    CHECK(ranked[1].distance == doctest::Approx(1.0));
}

TEST_CASE("one_sided_t_test on the worked examples") {
    const std::vector<double> same = {0.1, 0.2, 0.3};
    TTestResult r = one_sided_t_test(same, same);
    CHECK(r.t == doctest::Approx(0.0));
    CHECK(r.p == doctest::Approx(0.5));

    TTestResult strong = one_sided_t_test({1.0, 1.1, 0.9}, {0.0, 0.1, -0.1});
    CHECK(strong.p < 0.001);

    TTestResult fwd = one_sided_t_test({1.0, 1.2, 0.8}, {0.2, 0.3, 0.1});
    TTestResult rev = one_sided_t_test({0.2, 0.3, 0.1}, {1.0, 1.2, 0.8});
    CHECK(fwd.p + rev.p == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(one_sided_t_test({1.0, 1.0}, {2.0, 2.0}), DataError);
    CHECK_THROWS_AS(one_sided_t_test({1.0}, {2.0, 3.0}), UsageError);
}

TEST_CASE("t-test agrees with a permutation test at n=10") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> na(0.6, 0.1), nb(0.5, 0.1);
    std::vector<double> a(10), b(10);
    for (double& v : a) v = na(rng);
    for (double& v : b) v = nb(rng);
    const TTestResult t = one_sided_t_test(a, b);

    // Monte Carlo permutation test on the difference of means.
    std::vector<double> pool = a;
    pool.insert(pool.end(), b.begin(), b.end());
    double ma = 0, mb = 0;
    for (double v : a) ma += v;
    for (double v : b) mb += v;
    const double observed = ma / 10 - mb / 10;
    std::size_t at_least = 0;
    const std::size_t trials = 20000;
    for (std::size_t it = 0; it < trials; ++it) {
        std::shuffle(pool.begin(), pool.end(), rng);
        double pa = 0, pb = 0;
        for (int i = 0; i < 10; ++i) pa += pool[i];
        for (int i = 10; i < 20; ++i) pb += pool[i];
        if (pa / 10 - pb / 10 >= observed) ++at_least;
    }
    const double perm_p = static_cast<double>(at_least) / trials;
    CHECK(std::abs(perm_p - t.p) <= 0.05);
}

TEST_CASE("embeddings save and load with the id sidecar") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> dist(-1, 1);
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 5; ++i) {
        ids.push_back("seg" + std::to_string(i));
        std::vector<float> row(8);
        for (float& v : row) v = dist(rng);
        rows.push_back(row);
    }
    auto m = matrix_from_rows(ids, rows, "cgan");
    const std::string path = "emb_test.mmte";
    save_embeddings(m, path);
    EmbeddingMatrix back = load_embeddings(path);
    REQUIRE(back.count() == 5);
    REQUIRE(back.dim == 8);
    for (std::size_t i = 0; i < m.rows.size(); ++i) REQUIRE(back.rows[i] == m.rows[i]);
    CHECK(back.ids == m.ids);
    std::remove(path.c_str());
    std::remove((path + ".ids").c_str());
}

TEST_CASE("embed_corpus produces the documented dimensions and row order") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.segments_per_class = 4;
    spec.image_size = 16;
    spec.text_dim = 6;
    spec.seed = 7;
    Dataset ds = generate_synthetic_dataset(spec).dataset;

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
    auto cgan = build_cgan<float>(g, d, 8);
    EmbeddingMatrix mc = embed_corpus(cgan, ds);
    CHECK(mc.dim == d.embedding_dim());
    CHECK(mc.count() == 8);
    CHECK(mc.source == "cgan");

    AEConfig ac;
    ac.text_dim = 6;
    ac.visual_dim = 3 * 16 * 16;
    ac.branch = 16;
    ac.hidden = 10;
    auto ae = build_ae<float>(ac, 9);
    EmbeddingMatrix ma = embed_corpus(ae, ds);
    CHECK(ma.dim == 10);
    CHECK(ma.ids == mc.ids);

    // Permuting the dataset permutes rows identically (infer mode).
    Dataset rev = ds;
    std::reverse(rev.segments.begin(), rev.segments.end());
    EmbeddingMatrix mrev = embed_corpus(cgan, rev);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < mc.dim; ++c)
            REQUIRE(mrev.rows[(7 - r) * mc.dim + c] == mc.rows[r * mc.dim + c]);
}

TEST_CASE("raw single-modality embeddings carry their source tag") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.segments_per_class = 3;
    spec.image_size = 8;
    spec.text_dim = 5;
    spec.seed = 10;
    Dataset ds = generate_synthetic_dataset(spec).dataset;
    EmbeddingMatrix t = raw_embeddings(ds, RawSource::text_only);
    CHECK(t.source == "text_only");
    CHECK(t.dim == 5);
    EmbeddingMatrix v = raw_embeddings(ds, RawSource::visual_only);
    CHECK(v.source == "visual_only");
    CHECK(v.dim == 3 * 8 * 8);
}
