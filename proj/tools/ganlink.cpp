#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ganlink/checkpoint.hpp"
#include "ganlink/config.hpp"
#include "ganlink/data.hpp"
#include "ganlink/retrieval.hpp"
#include "ganlink/training.hpp"
#include "ganlink/viz.hpp"

namespace fs = std::filesystem;
using namespace ganlink;

namespace {

enum class Command { none, synth, train, embed, rank, evaluate, generate, invert };

struct Options {
    Command command = Command::none;

    // synth
    std::size_t classes = 4, per_class = 100, synth_image = 16, synth_text_dim = 32;
    double text_noise = 0.1, pixel_noise = 0.05;

    // shared
    std::string model, data, config_path, out, ckpt;
    std::uint64_t seed = 1;
    std::size_t image_size = 0; // 0 = native frame size (non-cgan models)

    // embed
    std::string raw_source;

    // rank
    std::string embeddings_path, anchor;
    std::size_t k = 10;

    // evaluate
    std::vector<std::string> run_files;
    std::string runs_dir;
    std::string groundtruth_path;
    std::vector<std::string> compare_files;
    std::string compare_dir;
    std::string report_out = "eval_report.csv";

    // generate / invert
    std::string phi_path, words, vocab_path, image_path;
    std::size_t count = 1;
    std::size_t top = 15;
};

std::vector<std::string> collect_runs(const std::vector<std::string>& files,
                                      const std::string& dir) {
    std::vector<std::string> out = files;
    if (!dir.empty()) {
        if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
        std::vector<std::string> found;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".mmte")
                found.push_back(e.path().string());
        std::sort(found.begin(), found.end());
        out.insert(out.end(), found.begin(), found.end());
    }
    if (out.empty()) throw DataError("no embedding runs given");
    return out;
}

std::vector<std::string> split_words(const std::string& csv) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : csv) {
        if (c == ',' || c == ' ') {
            if (!cur.empty()) words.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

void require_output(const std::string& path) {
    if (!fs::exists(path)) throw Error("expected output missing: " + path);
}

int cmd_synth(const Options& opt) {
    SyntheticSpec spec;
    spec.classes = opt.classes;
    spec.segments_per_class = opt.per_class;
    spec.image_size = opt.synth_image;
    spec.text_dim = opt.synth_text_dim;
    spec.text_noise = opt.text_noise;
    spec.pixel_noise = opt.pixel_noise;
    spec.seed = opt.seed;
    const SyntheticData data = generate_synthetic_dataset(spec);
    const std::string manifest = export_dataset(data, opt.out);
    require_output(manifest);
    std::cout << manifest << "\n";
    std::cout << data.dataset.segments.size() << " segments, " << spec.classes << " classes\n";
    return 0;
}

template <typename T>
int cmd_train(const Options& opt) {
    const ModelKind kind = model_kind_from_name(opt.model);
    ParsedConfig cfg = opt.config_path.empty()
                           ? default_config(kind)
                           : parse_config(kind, read_text_file(opt.config_path), true);
    cfg.train.seed = opt.seed;

    const std::size_t load_size =
        kind == ModelKind::cgan ? cfg.gen.image_size : opt.image_size;
    Dataset ds = load_dataset(opt.data, load_size);
    if (ds.dropped > 0)
        std::cerr << "dropped " << ds.dropped << " segment(s) lacking a modality\n";

    TrainLog log;
    auto progress = [&](std::size_t epoch) {
        if ((epoch + 1) % 50 == 0) std::cerr << "epoch " << (epoch + 1) << "\n";
    };
    switch (kind) {
        case ModelKind::cgan: {
            auto [bundle, l] = train_cgan<T>(ds, cfg.gen, cfg.disc, cfg.train, progress);
            bundle.bn_momentum = static_cast<T>(cfg.bn_momentum);
            save_checkpoint(bundle, opt.out);
            log = std::move(l);
            break;
        }
        case ModelKind::ae: {
            auto [bundle, l] = train_ae<T>(ds, cfg.ae, cfg.train);
            save_checkpoint(bundle, opt.out);
            log = std::move(l);
            break;
        }
        case ModelKind::bidnn: {
            auto [bundle, l] = train_bidnn<T>(ds, cfg.bidnn, cfg.train);
            save_checkpoint(bundle, opt.out);
            log = std::move(l);
            break;
        }
    }
    log.write_csv(opt.out + ".log.csv");
    require_output(opt.out);
    require_output(opt.out + ".log.csv");
    if (!log.rows.empty()) {
        const TrainLogRow& last = log.rows.back();
        std::cout << "trained " << opt.model << ": steps=" << log.rows.size()
                  << " final_d_loss=" << last.d_loss << " final_g_loss=" << last.g_loss << "\n";
    }
    return 0;
}

template <typename T>
int cmd_embed(const Options& opt) {
    EmbeddingMatrix m;
    if (!opt.raw_source.empty()) {
        Dataset ds = load_dataset(opt.data, opt.image_size);
        if (opt.raw_source == "text")
            m = raw_embeddings(ds, RawSource::text_only);
        else if (opt.raw_source == "visual")
            m = raw_embeddings(ds, RawSource::visual_only);
        else
            throw ConfigError("--raw must be 'text' or 'visual'");
    } else {
        if (opt.ckpt.empty()) throw ConfigError("embed needs --ckpt or --raw");
        ModelBundle<T> bundle = load_checkpoint<T>(opt.ckpt);
        const std::size_t load_size =
            bundle.kind == ModelKind::cgan ? bundle.gen_cfg.image_size : opt.image_size;
        Dataset ds = load_dataset(opt.data, load_size);
        m = embed_corpus(bundle, ds);
    }
    save_embeddings(m, opt.out);
    require_output(opt.out);
    require_output(opt.out + ".ids");
    std::cout << m.count() << " rows, dim " << m.dim << "\n";
    return 0;
}

int cmd_rank(const Options& opt) {
    EmbeddingMatrix m = load_embeddings(opt.embeddings_path);
    const auto ranked = rank_targets(opt.anchor, m, opt.k);
    std::cout.precision(6);
    std::cout << std::fixed;
    for (std::size_t i = 0; i < ranked.size(); ++i)
        std::cout << (i + 1) << "\t" << ranked[i].id << "\t" << ranked[i].distance << "\n";
    return 0;
}

int cmd_evaluate(const Options& opt) {
    const Groundtruth gt = load_groundtruth(opt.groundtruth_path);

    std::vector<EmbeddingMatrix> runs;
    for (const std::string& f : collect_runs(opt.run_files, opt.runs_dir))
        runs.push_back(load_embeddings(f));
    std::vector<EvalReport> reports;
    reports.push_back(evaluate(runs, gt, opt.k));

    if (!opt.compare_files.empty() || !opt.compare_dir.empty()) {
        std::vector<EmbeddingMatrix> other;
        for (const std::string& f : collect_runs(opt.compare_files, opt.compare_dir))
            other.push_back(load_embeddings(f));
        reports.push_back(evaluate(other, gt, opt.k));
        // At least two runs per side compares run means; single runs fall
        // back to the per-anchor precision lists.
        std::vector<double> a, b;
        if (reports[0].runs >= 2 && reports[1].runs >= 2) {
            a = reports[0].run_means;
            b = reports[1].run_means;
        } else {
            a = reports[0].per_anchor_per_run[0];
            b = reports[1].per_anchor_per_run[0];
        }
        const TTestResult t = one_sided_t_test(a, b);
        std::cout << report_table(reports);
        std::cout << "one-sided t-test (" << reports[0].source << " > " << reports[1].source
                  << "): t=" << t.t << " dof=" << t.dof << " p=" << t.p << "\n";
    } else {
        std::cout << report_table(reports);
    }
    write_text_file(opt.report_out, report_csv(reports));
    require_output(opt.report_out);
    return 0;
}

template <typename T>
int cmd_generate(const Options& opt) {
    ModelBundle<T> bundle = load_checkpoint<T>(opt.ckpt);
    std::vector<float> phi;
    std::string phi_source;
    if (!opt.phi_path.empty()) {
        MmteTensor t = read_mmte(opt.phi_path);
        phi = std::move(t.values);
        phi_source = opt.phi_path;
    } else if (!opt.words.empty()) {
        if (opt.vocab_path.empty()) throw ConfigError("--words requires --vocab");
        const Vocabulary vocab = load_vocabulary(opt.vocab_path);
        const auto words = split_words(opt.words);
        auto [vec, coverage] = average_word_embeddings(words, vocab);
        if (coverage == 0.0) throw DataError("no word found in the vocabulary");
        phi = std::move(vec);
        phi_source = "words:" + opt.words;
    } else {
        throw ConfigError("generate needs --phi or --words");
    }

    fs::create_directories(opt.out);
    const auto images =
        render_text_to_images(bundle, std::span<const float>(phi), opt.count, opt.seed, phi_source);
    nlohmann::json prov = nlohmann::json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%03zu.ppm", i);
        const std::string path = (fs::path(opt.out) / name).string();
        write_image(images[i], path);
        require_output(path);
        prov.push_back({{"file", name},
                        {"model", images[i].provenance.model_tag},
                        {"phi_source", images[i].provenance.phi_source},
                        {"z_seed", images[i].provenance.z_seed}});
        std::cout << path << "\n";
    }
    write_text_file((fs::path(opt.out) / "provenance.json").string(), prov.dump(2) + "\n");
    return 0;
}

template <typename T>
int cmd_invert(const Options& opt) {
    ModelBundle<T> bundle = load_checkpoint<T>(opt.ckpt);
    if (bundle.kind != ModelKind::cgan) throw UsageError("invert needs a cgan checkpoint");
    const std::size_t S = bundle.gen_cfg.image_size;

    std::vector<T> image;
    if (opt.image_path.size() > 5 && opt.image_path.substr(opt.image_path.size() - 5) == ".mmte") {
        MmteTensor t = read_mmte(opt.image_path);
        if (t.values.size() != 3 * S * S)
            throw DataError("image tensor has " + std::to_string(t.values.size()) +
                            " values, expected " + std::to_string(3 * S * S));
        image.assign(t.values.begin(), t.values.end());
    } else {
        const Image ppm = read_ppm(opt.image_path);
        if (ppm.width != S || ppm.height != S)
            throw DataError("image must be " + std::to_string(S) + "x" + std::to_string(S));
        const auto planar = image_to_planar(ppm);
        image.assign(planar.begin(), planar.end());
    }

    const Vocabulary vocab = load_vocabulary(opt.vocab_path);
    if (vocab.empty()) throw DataError("empty vocabulary: " + opt.vocab_path);
    const auto preimage = invert_generator(bundle, std::span<const T>(image));
    const auto phi_part =
        slice_text_part(preimage, bundle.gen_cfg.noise_dim, bundle.gen_cfg.text_dim);
    const std::size_t k = std::min(opt.top, vocab.size());
    const WordRanking ranking = nearest_words_t(std::span<const T>(phi_part), vocab, k);
    std::cout.precision(6);
    std::cout << std::fixed;
    for (const auto& [word, sim] : ranking.entries) std::cout << word << "\t" << sim << "\n";
    return 0;
}

template <typename T>
int run(const Options& opt) {
    switch (opt.command) {
        case Command::synth: return cmd_synth(opt);
        case Command::train: return cmd_train<T>(opt);
        case Command::embed: return cmd_embed<T>(opt);
        case Command::rank: return cmd_rank(opt);
        case Command::evaluate: return cmd_evaluate(opt);
        case Command::generate: return cmd_generate<T>(opt);
        case Command::invert: return cmd_invert<T>(opt);
        case Command::none: break;
    }
    throw ConfigError("no subcommand given");
}

} // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"multimodal video-segment embeddings: conditional GAN, autoencoder and "
                 "BiDNN baselines, retrieval evaluation, crossmodal visualization"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "write a synthetic paired-modality dataset");
    synth->add_option("--classes", opt.classes);
    synth->add_option("--per", opt.per_class, "segments per class");
    synth->add_option("--image-size", opt.synth_image);
    synth->add_option("--text-dim", opt.synth_text_dim);
    synth->add_option("--text-noise", opt.text_noise);
    synth->add_option("--pixel-noise", opt.pixel_noise);
    synth->add_option("--seed", opt.seed);
    synth->add_option("--out", opt.out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    train->add_option("--model", opt.model, "cgan|ae|bidnn")->required();
    train->add_option("--data", opt.data, "manifest path")->required();
    train->add_option("--config", opt.config_path, "flat JSON config");
    train->add_option("--seed", opt.seed);
    train->add_option("--image-size", opt.image_size,
                      "keyframe preprocessing size for ae/bidnn (0 = native)");
    train->add_option("--out", opt.out, "checkpoint path")->required();

    auto* embed = app.add_subcommand("embed", "embed a corpus with a trained model");
    embed->add_option("--ckpt", opt.ckpt);
    embed->add_option("--data", opt.data)->required();
    embed->add_option("--raw", opt.raw_source, "text|visual: raw single-modality rows");
    embed->add_option("--image-size", opt.image_size);
    embed->add_option("--out", opt.out)->required();

    auto* rank = app.add_subcommand("rank", "rank targets for an anchor");
    rank->add_option("--embeddings", opt.embeddings_path)->required();
    rank->add_option("--anchor", opt.anchor)->required();
    rank->add_option("--k", opt.k);

    auto* evaluate = app.add_subcommand("evaluate", "precision@k report over runs");
    evaluate->add_option("--embeddings", opt.run_files, "embedding run files")->delimiter(',');
    evaluate->add_option("--runs", opt.runs_dir, "directory of embedding runs");
    evaluate->add_option("--groundtruth", opt.groundtruth_path)->required();
    evaluate->add_option("--k", opt.k);
    evaluate->add_option("--compare", opt.compare_files, "second set for the t-test")
        ->delimiter(',');
    evaluate->add_option("--compare-runs", opt.compare_dir);
    evaluate->add_option("--out", opt.report_out, "CSV report path");

    auto* generate = app.add_subcommand("generate", "render images for a text embedding");
    generate->add_option("--ckpt", opt.ckpt)->required();
    generate->add_option("--phi", opt.phi_path, "MMTE text embedding");
    generate->add_option("--words", opt.words, "comma-separated words");
    generate->add_option("--vocab", opt.vocab_path);
    generate->add_option("--n", opt.count);
    generate->add_option("--seed", opt.seed);
    generate->add_option("--out", opt.out, "output directory")->required();

    auto* invert = app.add_subcommand("invert", "top words for an image");
    invert->add_option("--ckpt", opt.ckpt)->required();
    invert->add_option("--image", opt.image_path, "PPM or MMTE image")->required();
    invert->add_option("--vocab", opt.vocab_path)->required();
    invert->add_option("--top", opt.top);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (synth->parsed()) opt.command = Command::synth;
    else if (train->parsed()) opt.command = Command::train;
    else if (embed->parsed()) opt.command = Command::embed;
    else if (rank->parsed()) opt.command = Command::rank;
    else if (evaluate->parsed()) opt.command = Command::evaluate;
    else if (generate->parsed()) opt.command = Command::generate;
    else if (invert->parsed()) opt.command = Command::invert;

    const char* precision = std::getenv("HYPERLINK_PRECISION");
    const bool high = precision && std::string(precision) == "high";

    try {
        return high ? run<double>(opt) : run<float>(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
