// kneebench command-line tool: dataset generation, training, detection, and
// evaluation as reproducible, config-recorded runs.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "kneebench/posteval.hpp"
#include "kneebench/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint32_t file_crc32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw kb::IoError("cannot open for checksum: " + path);
    uLong crc = crc32(0L, Z_NULL, 0);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(in.gcount()));
    return static_cast<std::uint32_t>(crc);
}

// Flat key=value record of the fully-resolved run configuration.
void write_resolved_config(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw kb::IoError("cannot write resolved config: " + path);
    for (const auto& [k, v] : kv)
        out << k << "=" << v << "\n";
    if (!out)
        throw kb::IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
    std::string split;
    std::size_t n = 0;
    std::size_t L = 512;
    std::uint64_t seed = 42;
    std::string out;
    int threads = 1;
};

int cmd_gen(const GenArgs& a) {
    const kb::Split split = kb::split_from_name(a.split);
    const kb::Dataset ds = kb::gen_dataset(split, a.n, a.L, a.seed, a.threads);
    if (const fs::path dir = fs::path(a.out).parent_path(); !dir.empty())
        fs::create_directories(dir);
    kb::write_dataset(ds, a.out);
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", file_crc32(a.out));
    write_resolved_config(a.out + ".manifest",
                          {{"command", "gen"},
                           {"split", a.split},
                           {"n", std::to_string(a.n)},
                           {"L", std::to_string(a.L)},
                           {"seed", std::to_string(a.seed)},
                           {"generator_version", kb::kGeneratorVersion},
                           {"file", fs::path(a.out).filename().string()},
                           {"bytes", std::to_string(fs::file_size(a.out))},
                           {"crc32", crc}});
    std::cout << "wrote " << ds.samples.size() << " samples to " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string out;
    std::vector<double> alphas{0.1};
    kb::TrainConfig tc;
    std::uint64_t model_seed = 0;
    double width_scale = 1.0;
    std::size_t kernel = 11;
    bool plain_loss = false;
    std::optional<std::size_t> early_stop;
};

int cmd_train(const TrainArgs& a) {
    const kb::Dataset ds = kb::read_dataset(a.data);
    fs::create_directories(a.out);

    kb::ModelConfig mc;
    mc.length = ds.L;
    mc.width_scale = a.width_scale;
    mc.kernel = a.kernel;
    mc.validate();

    const bool sweep = a.alphas.size() > 1;
    std::vector<std::pair<std::string, std::string>> cfg{
        {"command", "train"},
        {"data", a.data},
        {"n_train", std::to_string(ds.samples.size())},
        {"L", std::to_string(ds.L)},
        {"width_scale", fmt_double(a.width_scale)},
        {"kernel", std::to_string(a.kernel)},
        {"model_seed", std::to_string(a.model_seed)},
        {"epochs", std::to_string(a.tc.epochs)},
        {"batch_size", std::to_string(a.tc.batch_size)},
        {"lr0", fmt_double(a.tc.lr0)},
        {"rho", fmt_double(a.tc.rho)},
        {"halve_every", std::to_string(a.tc.halve_every)},
        {"seed", std::to_string(a.tc.seed)},
        {"eval_every", std::to_string(a.tc.eval_every)},
        {"val_fraction", fmt_double(a.tc.val_fraction)},
        {"plain_loss", a.plain_loss ? "1" : "0"},
        {"early_stop", a.early_stop ? std::to_string(*a.early_stop) : "none"}};
    for (double alpha : a.alphas)
        cfg.emplace_back("alpha", fmt_double(alpha));
    write_resolved_config((fs::path(a.out) / "config.txt").string(), cfg);

    for (double alpha : a.alphas) {
        kb::TrainConfig tc = a.tc;
        tc.alpha = alpha;
        tc.plain_loss = a.plain_loss;
        tc.early_stop = a.early_stop;
        tc.validate();

        auto model = kb::build(mc, a.model_seed);
        auto result = kb::train(model, ds, tc);

        char short_alpha[32];
        std::snprintf(short_alpha, sizeof short_alpha, "%g", alpha);
        const std::string suffix = sweep ? std::string("-a") + short_alpha : "";
        const fs::path out(a.out);
        kb::save_checkpoint(result.final_model, (out / ("final" + suffix + ".ckpt")).string());
        kb::save_checkpoint(result.best_model, (out / ("best" + suffix + ".ckpt")).string());
        kb::write_history(result.history, (out / ("history" + suffix + ".tsv")).string());
        std::cout << "alpha " << alpha << ": " << result.history.size() << " epochs, final loss "
                  << result.history.back().mean_loss << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// detect

struct DetectArgs {
    std::string method;
    std::string data;
    std::string series;
    std::string model_path;
    std::string out;
    double zeta = 0.01;
    std::string transform = "projection";
    bool refine = false;
    kb::NmsConfig nms;
    int threads = 1;
};

// Bare input: one y per line, or "x y" pairs; '#' comments allowed.
kb::Sample read_bare_series(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw kb::IoError("cannot open series file: " + path);
    std::vector<double> xs, ys;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto h = line.find('#'); h != std::string::npos)
            line.erase(h);
        std::istringstream ss(line);
        double a = 0.0, b = 0.0;
        if (!(ss >> a))
            continue;
        if (ss >> b) {
            xs.push_back(a);
            ys.push_back(b);
        } else {
            xs.push_back(static_cast<double>(ys.size()));
            ys.push_back(a);
        }
    }
    if (ys.size() < 3)
        throw kb::FormatError("series file has fewer than 3 points: " + path);
    const kb::NormalizedSeries norm = kb::normalize({xs, ys});
    kb::Sample s;
    s.id = fs::path(path).filename().string();
    s.xs = norm.xs;
    s.ys_noisy = norm.ys;
    s.ys_clean = norm.ys; // no clean reference for external data
    return s;
}

// Translate the user-facing method name into the detector-pipeline name.
std::string pipeline_name(const DetectArgs& a) {
    if (a.method == "kneedle")
        return a.transform == "rotation" ? "kneedle-rot" : "kneedle-proj";
    if (a.method == "dfdt")
        return a.refine ? "dfdt-ref" : "dfdt";
    if (a.method == "al")
        return a.refine ? "al-ref" : "al";
    return a.method; // "l", "s"
}

kb::MethodFn make_method(const std::string& method, const DetectArgs& a, kb::Model* model) {
    if (method == "unet")
        return [model, nms = a.nms](const kb::Sample& s) {
            return kb::unet_detect(*model, s, nms);
        };
    const std::string name = pipeline_name(a);
    return [name, zeta = a.zeta](const kb::Sample& s) {
        return kb::classical_detect(name, s, zeta);
    };
}

bool single_knee_only(const std::string& method) {
    return method == "l" || method == "dfdt" || method == "al" || method == "s";
}

int cmd_detect(const DetectArgs& a) {
    if (a.data.empty() == a.series.empty())
        throw UsageError("detect: provide exactly one of --data or --series");

    kb::Dataset ds;
    if (!a.data.empty()) {
        ds = kb::read_dataset(a.data);
    } else {
        ds.samples.push_back(read_bare_series(a.series));
        ds.L = ds.samples[0].size();
    }
    if (!a.data.empty() && ds.split == kb::Split::mknee && single_knee_only(a.method))
        throw UsageError("detect: method '" + a.method +
                         "' reports a single knee and is not applicable to the multi-knee split");

    kb::Model model;
    if (a.method == "unet") {
        if (a.model_path.empty())
            throw UsageError("detect: --method unet requires --model");
        model = kb::load_checkpoint(a.model_path);
    }
    const kb::MethodFn fn = make_method(a.method, a, &model);

    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!a.out.empty()) {
        if (const fs::path dir = fs::path(a.out).parent_path(); !dir.empty())
            fs::create_directories(dir);
        file.open(a.out, std::ios::trunc);
        if (!file)
            throw kb::IoError("cannot open output: " + a.out);
        out = &file;
    }
    for (const auto& s : ds.samples) {
        json rec;
        rec["id"] = s.id;
        try {
            rec["indices"] = fn(s);
        } catch (const kb::Error& e) {
            rec["indices"] = json::array();
            rec["error"] = e.what();
        }
        *out << rec.dump() << "\n";
    }
    if (!*out)
        throw kb::IoError("detect: write failed");
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string data;
    std::vector<std::string> methods;
    std::string detections;
    std::string model_path;
    std::string out;
    double zeta = 0.01;
    std::string transform = "projection";
    bool refine = false;
    bool svg = false;
    std::size_t trials = 1;
    std::vector<std::size_t> tolerances;
    kb::NmsConfig nms;
    int threads = 1;
};

// Noise re-draw for trial t > 0; trial 0 keeps the dataset as stored.
kb::Dataset renoise(const kb::Dataset& ds, std::size_t trial) {
    if (trial == 0)
        return ds;
    kb::Dataset copy = ds;
    for (auto& s : copy.samples)
        s.ys_noisy = kb::inject_noise(s.ys_clean, s.L_prime,
                                      kb::Rng::derive(s.seed, 0x7472690000ULL + trial));
    return copy;
}

std::map<std::string, std::vector<std::size_t>> read_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw kb::IoError("cannot open detections: " + path);
    std::map<std::string, std::vector<std::size_t>> by_id;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("id") || !rec.contains("indices"))
            throw kb::FormatError("detections line " + std::to_string(lineno) +
                                  ": expected {id, indices}");
        by_id[rec["id"].get<std::string>()] = rec["indices"].get<std::vector<std::size_t>>();
    }
    return by_id;
}

int cmd_eval(const EvalArgs& a) {
    if (a.methods.empty() == a.detections.empty())
        throw UsageError("eval: provide --method (repeatable) or --detections, not both");
    const kb::Dataset ds = kb::read_dataset(a.data);
    fs::create_directories(a.out);

    std::vector<std::size_t> tols = a.tolerances;
    if (tols.empty())
        tols = {1, 2, 3, 4, 5, 6};

    // name -> per-sample detector
    std::vector<std::pair<std::string, kb::MethodFn>> runs;
    kb::Model model;
    bool model_loaded = false;
    if (!a.detections.empty()) {
        auto by_id = read_detections(a.detections);
        runs.emplace_back("detections", [by_id](const kb::Sample& s) -> std::vector<std::size_t> {
            const auto it = by_id.find(s.id);
            if (it == by_id.end())
                throw kb::FormatError("no detection record for sample " + s.id);
            return it->second;
        });
    } else {
        for (const auto& m : a.methods) {
            DetectArgs da;
            da.method = m;
            da.zeta = a.zeta;
            da.transform = a.transform;
            da.refine = a.refine;
            da.nms = a.nms;
            if (m == "unet") {
                if (a.model_path.empty())
                    throw UsageError("eval: --method unet requires --model");
                if (!model_loaded) {
                    model = kb::load_checkpoint(a.model_path);
                    model_loaded = true;
                }
            }
            if (ds.split == kb::Split::mknee && single_knee_only(m))
                throw UsageError("eval: method '" + m +
                                 "' reports a single knee and is not applicable to the "
                                 "multi-knee split");
            runs.emplace_back(m, make_method(m, da, &model));
        }
    }

    kb::EvalReport merged;
    for (const auto& [name, fn] : runs) {
        // accumulate over trials, then average the per-trial mean F1
        std::vector<kb::EvalRow> acc;
        for (std::size_t trial = 0; trial < a.trials; ++trial) {
            const kb::Dataset dst = renoise(ds, trial);
            const kb::EvalReport rep = kb::evaluate(name, fn, dst, tols, a.threads);
            if (acc.empty()) {
                acc = rep.rows;
            } else {
                for (std::size_t r = 0; r < acc.size(); ++r) {
                    acc[r].mean_f1 += rep.rows[r].mean_f1;
                    acc[r].n += rep.rows[r].n;
                    acc[r].tp += rep.rows[r].tp;
                    acc[r].fp += rep.rows[r].fp;
                    acc[r].fn += rep.rows[r].fn;
                    acc[r].failures += rep.rows[r].failures;
                }
            }
        }
        for (auto& r : acc) {
            r.mean_f1 /= static_cast<double>(a.trials);
            merged.rows.push_back(r);
        }
    }

    const fs::path out(a.out);
    kb::write_report(merged, (out / "report.csv").string(), kb::ReportFormat::csv);
    if (a.svg)
        kb::write_report(merged, (out / "report.svg").string(), kb::ReportFormat::svg);

    std::vector<std::pair<std::string, std::string>> cfg{
        {"command", "eval"},
        {"data", a.data},
        {"split", kb::split_name(ds.split)},
        {"n", std::to_string(ds.samples.size())},
        {"trials", std::to_string(a.trials)},
        {"zeta", fmt_double(a.zeta)},
        {"transform", a.transform},
        {"refine", a.refine ? "1" : "0"},
        {"nms_delta", fmt_double(a.nms.delta)},
        {"nms_radius", std::to_string(a.nms.radius)},
        {"threads", std::to_string(a.threads)}};
    for (const auto& m : a.methods)
        cfg.emplace_back("method", m);
    if (!a.detections.empty())
        cfg.emplace_back("detections", a.detections);
    for (std::size_t t : tols)
        cfg.emplace_back("tolerance", std::to_string(t));
    write_resolved_config((out / "config.txt").string(), cfg);

    for (const auto& r : merged.rows)
        if (r.tolerance == 2)
            std::cout << r.method << " F1@2 = " << r.mean_f1 << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"knee-point detection benchmark: generate, train, detect, evaluate"};
    app.require_subcommand(1);
    app.set_config("--config");

    const std::vector<std::string> kMethods{"unet", "kneedle", "l", "dfdt", "al", "s"};

    GenArgs g;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset (JSONL + manifest)");
    gen->add_option("--split", g.split, "train|sknee|mknee|ng")
        ->required()
        ->check(CLI::IsMember({"train", "sknee", "mknee", "ng"}));
    gen->add_option("--n", g.n, "Number of samples")->required();
    gen->add_option("--L", g.L, "Series length")->capture_default_str();
    gen->add_option("--seed", g.seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", g.out, "Output JSONL path")->required();
    gen->add_option("--threads", g.threads, "Worker threads")->capture_default_str()
        ->envname("KNEEBENCH_THREADS");

    TrainArgs t;
    auto* train = app.add_subcommand("train", "Train the segmentation network");
    train->add_option("--data", t.data, "Training dataset (JSONL)")->required();
    train->add_option("--out", t.out, "Output run directory")->required();
    train->add_option("--alpha", t.alphas, "Loss alpha; repeat for a sweep")->capture_default_str();
    train->add_option("--epochs", t.tc.epochs, "Epochs")->capture_default_str();
    train->add_option("--batch-size", t.tc.batch_size, "Batch size")->capture_default_str();
    train->add_option("--lr0", t.tc.lr0, "Initial learning rate")->capture_default_str();
    train->add_option("--rho", t.tc.rho, "AdaDelta decay")->capture_default_str();
    train->add_option("--halve-every", t.tc.halve_every, "Halve lr every N epochs")->capture_default_str();
    train->add_option("--seed", t.tc.seed, "Training seed (shuffling, split)")->capture_default_str();
    train->add_option("--model-seed", t.model_seed, "Weight-init seed")->capture_default_str();
    train->add_option("--eval-every", t.tc.eval_every, "Validate every N epochs")->capture_default_str();
    train->add_option("--val-fraction", t.tc.val_fraction, "Held-out validation fraction")->capture_default_str();
    train->add_option("--width-scale", t.width_scale, "Channel width multiplier")->capture_default_str();
    train->add_option("--kernel", t.kernel, "Conv kernel size")->capture_default_str();
    train->add_flag("--plain-loss", t.plain_loss, "Use 1 - F1 without the alpha/F1 term");
    std::size_t patience = 0;
    auto* es = train->add_option("--early-stop", patience, "Stop after N evals without improvement");

    DetectArgs d;
    auto* detect = app.add_subcommand("detect", "Run one detector over a dataset or bare series");
    detect->add_option("--method", d.method, "unet|kneedle|l|dfdt|al|s")
        ->required()
        ->check(CLI::IsMember(kMethods));
    detect->add_option("--data", d.data, "Dataset (JSONL)");
    detect->add_option("--series", d.series, "Bare series file (y per line, or x y pairs)");
    detect->add_option("--model", d.model_path, "Checkpoint (required for unet)");
    detect->add_option("--zeta", d.zeta, "Kneedle sensitivity")->capture_default_str();
    detect->add_option("--transform", d.transform, "Kneedle difference transform")->capture_default_str()
        ->check(CLI::IsMember({"projection", "rotation"}));
    detect->add_flag("--refine", d.refine, "Enable iterative refinement (dfdt, al)");
    detect->add_option("--delta", d.nms.delta, "NMS probability threshold")->capture_default_str();
    detect->add_option("--radius", d.nms.radius, "NMS suppression radius")->capture_default_str();
    detect->add_option("--out", d.out, "Output JSONL (default stdout)");
    detect->add_option("--threads", d.threads, "Worker threads")->capture_default_str()
        ->envname("KNEEBENCH_THREADS");

    EvalArgs e;
    auto* eval = app.add_subcommand("eval", "Score detectors against labels (CSV/SVG report)");
    eval->add_option("--data", e.data, "Labeled dataset (JSONL)")->required();
    eval->add_option("--method", e.methods, "Method; repeatable")
        ->check(CLI::IsMember(kMethods));
    eval->add_option("--detections", e.detections, "Pre-computed detections (JSONL)");
    eval->add_option("--model", e.model_path, "Checkpoint (required for unet)");
    eval->add_option("--zeta", e.zeta, "Kneedle sensitivity")->capture_default_str();
    eval->add_option("--transform", e.transform, "Kneedle difference transform")->capture_default_str()
        ->check(CLI::IsMember({"projection", "rotation"}));
    eval->add_flag("--refine", e.refine, "Enable iterative refinement (dfdt, al)");
    eval->add_option("--delta", e.nms.delta, "NMS probability threshold")->capture_default_str();
    eval->add_option("--radius", e.nms.radius, "NMS suppression radius")->capture_default_str();
    eval->add_option("--tolerance", e.tolerances, "Allowable index error; repeatable (default 1..6)");
    eval->add_option("--trials", e.trials, "Average over N noise re-draws")->capture_default_str();
    eval->add_flag("--svg", e.svg, "Also write an SVG chart");
    eval->add_option("--out", e.out, "Output run directory")->required();
    eval->add_option("--threads", e.threads, "Worker threads")->capture_default_str()
        ->envname("KNEEBENCH_THREADS");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen)
            return cmd_gen(g);
        if (*train) {
            if (es->count())
                t.early_stop = patience;
            return cmd_train(t);
        }
        if (*detect)
            return cmd_detect(d);
        if (*eval)
            return cmd_eval(e);
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 2;
}
