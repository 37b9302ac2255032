#include "kneebench/posteval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kneebench/parallel.hpp"

namespace kb {

std::vector<std::size_t> nms(const std::vector<double>& probs, const NmsConfig& cfg) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i] >= cfg.delta)
            candidates.push_back(i);
    std::vector<bool> alive(candidates.size(), true);
    std::vector<std::size_t> kept;
    for (;;) {
        std::size_t best = candidates.size();
        for (std::size_t c = 0; c < candidates.size(); ++c)
            if (alive[c] && (best == candidates.size() ||
                             probs[candidates[c]] > probs[candidates[best]]))
                best = c; // ties keep the earlier (smaller) index
        if (best == candidates.size())
            break;
        const std::size_t idx = candidates[best];
        kept.push_back(idx);
        for (std::size_t c = 0; c < candidates.size(); ++c)
            if (alive[c] && candidates[c] + cfg.radius >= idx && candidates[c] <= idx + cfg.radius)
                alive[c] = false;
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

MatchCounts match_at_tolerance(const std::vector<std::size_t>& pred,
                               const std::vector<std::size_t>& truth, std::size_t tol) {
    MatchCounts c;
    std::size_t i = 0, j = 0;
    while (i < pred.size() && j < truth.size()) {
        const std::size_t p = pred[i], t = truth[j];
        if (p + tol >= t && p <= t + tol) {
            ++c.tp;
            ++i;
            ++j;
        } else if (p < t) {
            ++c.fp;
            ++i;
        } else {
            ++c.fn;
            ++j;
        }
    }
    c.fp += pred.size() - i;
    c.fn += truth.size() - j;
    return c;
}

double f1_at_tolerance(const std::vector<std::size_t>& pred,
                       const std::vector<std::size_t>& truth, std::size_t tol) {
    if (pred.empty() && truth.empty())
        return 1.0;
    const MatchCounts c = match_at_tolerance(pred, truth, tol);
    return 2.0 * static_cast<double>(c.tp) /
           static_cast<double>(2 * c.tp + c.fp + c.fn);
}

std::vector<std::size_t> classical_detect(const std::string& method, const Sample& sample,
                                          double kneedle_zeta) {
    const SmoothingConfig smooth =
        select_smooth_config(sample.ys_noisy, sample.ys_clean, smoothing_grid());
    NormalizedSeries noisy = sample.noisy_series();
    if (method == "kneedle-proj")
        return kneedle(noisy, {kneedle_zeta, KneedleTransform::projection}, smooth).indices;
    if (method == "kneedle-rot")
        return kneedle(noisy, {kneedle_zeta, KneedleTransform::rotation}, smooth).indices;

    NormalizedSeries smoothed = noisy;
    smoothed.ys = ewm_smooth(noisy.ys, smooth);
    if (method == "l")
        return l_method(smoothed).indices;
    if (method == "s")
        return s_method(smoothed).indices;
    if (method == "dfdt" || method == "dfdt-ref")
        return dfdt(concavity_preprocess(smoothed), method == "dfdt-ref").indices;
    if (method == "al" || method == "al-ref")
        return al_method(concavity_preprocess(smoothed), FitMode::best_fit, method == "al-ref")
            .indices;
    throw ConfigError("unknown classical method: " + method);
}

std::vector<std::size_t> unet_detect(Model& model, const Sample& sample, const NmsConfig& cfg) {
    const std::size_t L = model.config.length;
    std::vector<double> xs = sample.xs, ys = sample.ys_noisy;
    if (sample.size() != L) {
        // linear resample onto an even grid of the model's length
        std::vector<double> rx(L), ry(L);
        for (std::size_t i = 0; i < L; ++i) {
            const double u = static_cast<double>(i) / static_cast<double>(L - 1) *
                             static_cast<double>(sample.size() - 1);
            const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(u),
                                                        sample.size() - 2);
            const double f = u - static_cast<double>(k);
            rx[i] = xs[k] + f * (xs[k + 1] - xs[k]);
            ry[i] = ys[k] + f * (ys[k + 1] - ys[k]);
        }
        xs = std::move(rx);
        ys = std::move(ry);
    }
    const std::vector<double> probs = predict(model, xs, ys);
    std::vector<std::size_t> idx = nms(probs, cfg);
    if (sample.size() != L) {
        // map back to original indices
        for (auto& i : idx)
            i = static_cast<std::size_t>(std::llround(
                static_cast<double>(i) / static_cast<double>(L - 1) *
                static_cast<double>(sample.size() - 1)));
    }
    return idx;
}

EvalReport evaluate(const std::string& method_name, const MethodFn& method,
                    const Dataset& dataset, const std::vector<std::size_t>& tolerances,
                    int threads) {
    const std::size_t n = dataset.samples.size();
    std::vector<std::vector<std::size_t>> preds(n);
    std::vector<char> failed(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
        try {
            preds[i] = method(dataset.samples[i]);
        } catch (const std::exception&) {
            failed[i] = 1;
        }
    });
    std::size_t failures = 0;
    for (char f : failed)
        failures += f;

    EvalReport report;
    report.metadata["method"] = method_name;
    report.metadata["split"] = split_name(dataset.split);
    report.metadata["n"] = std::to_string(n);
    report.metadata["failures"] = std::to_string(failures);
    for (std::size_t tol : tolerances) {
        EvalRow row;
        row.method = method_name;
        row.test_set = split_name(dataset.split);
        row.tolerance = tol;
        row.n = n;
        row.failures = failures;
        double sum_f1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& truth = dataset.samples[i].knee_indices;
            if (failed[i]) {
                row.fn += truth.size();
                continue; // scores 0
            }
            const MatchCounts c = match_at_tolerance(preds[i], truth, tol);
            row.tp += c.tp;
            row.fp += c.fp;
            row.fn += c.fn;
            sum_f1 += f1_at_tolerance(preds[i], truth, tol);
        }
        row.mean_f1 = n == 0 ? 0.0 : sum_f1 / static_cast<double>(n);
        report.rows.push_back(row);
    }
    return report;
}

ZetaSweepResult zeta_sweep(const Dataset& dataset, const std::vector<double>& zetas,
                           KneedleTransform transform, const std::vector<std::size_t>& tolerances,
                           int threads) {
    if (zetas.empty())
        throw ConfigError("zeta_sweep: empty grid");
    const std::string method =
        transform == KneedleTransform::projection ? "kneedle-proj" : "kneedle-rot";
    std::vector<double> sorted = zetas;
    std::sort(sorted.begin(), sorted.end());
    ZetaSweepResult result;
    double best_score = -1.0;
    for (double zeta : sorted) {
        const EvalReport rep = evaluate(
            method, [&](const Sample& s) { return classical_detect(method, s, zeta); }, dataset,
            tolerances, threads);
        double score = 0.0;
        for (const auto& row : rep.rows)
            score += row.mean_f1;
        score /= static_cast<double>(rep.rows.size());
        result.scores[zeta] = score;
        if (score > best_score) { // strict: ties keep the smaller zeta
            best_score = score;
            result.best_zeta = zeta;
        }
    }
    return result;
}

namespace {

void write_csv(const EvalReport& report, std::ostream& out) {
    out << "method,test_set,tolerance,mean_f1,n,tp,fp,fn,failures\n";
    char buf[64];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.mean_f1);
        out << r.method << ',' << r.test_set << ',' << r.tolerance << ',' << buf << ',' << r.n
            << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.failures << '\n';
    }
}

void write_svg(const EvalReport& report, std::ostream& out) {
    // One 960x480 chart per test set, methods as polylines over tolerance.
    std::vector<std::string> sets;
    for (const auto& r : report.rows)
        if (std::find(sets.begin(), sets.end(), r.test_set) == sets.end())
            sets.push_back(r.test_set);
    const double W = 960.0, H = 480.0;
    const double ml = 60.0, mr = 20.0, mt = 40.0, mb = 40.0;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\""
        << static_cast<int>(H) * sets.size() << "\">\n";
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    for (std::size_t si = 0; si < sets.size(); ++si) {
        const double oy = si * H;
        std::size_t tol_min = SIZE_MAX, tol_max = 0;
        std::vector<std::string> methods;
        for (const auto& r : report.rows)
            if (r.test_set == sets[si]) {
                tol_min = std::min(tol_min, r.tolerance);
                tol_max = std::max(tol_max, r.tolerance);
                if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
                    methods.push_back(r.method);
            }
        const double span = tol_max > tol_min ? static_cast<double>(tol_max - tol_min) : 1.0;
        const auto px = [&](std::size_t tol) {
            return ml + (W - ml - mr) * static_cast<double>(tol - tol_min) / span;
        };
        const auto py = [&](double f1) { return oy + mt + (H - mt - mb) * (1.0 - f1); };
        out << "<g>\n";
        out << "<text x=\"" << ml << "\" y=\"" << oy + 24 << "\" font-size=\"16\">" << sets[si]
            << " (F1 vs tolerance)</text>\n";
        out << "<line x1=\"" << ml << "\" y1=\"" << py(0.0) << "\" x2=\"" << W - mr << "\" y2=\""
            << py(0.0) << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << ml << "\" y1=\"" << py(0.0) << "\" x2=\"" << ml << "\" y2=\""
            << py(1.0) << "\" stroke=\"black\"/>\n";
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            out << "<polyline fill=\"none\" stroke=\"" << palette[mi % 8] << "\" points=\"";
            for (const auto& r : report.rows)
                if (r.test_set == sets[si] && r.method == methods[mi])
                    out << px(r.tolerance) << ',' << py(r.mean_f1) << ' ';
            out << "\"/>\n";
            out << "<text x=\"" << W - mr - 150 << "\" y=\"" << oy + mt + 16 * (mi + 1)
                << "\" font-size=\"12\" fill=\"" << palette[mi % 8] << "\">" << methods[mi]
                << "</text>\n";
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
}

} // namespace

void write_report(const EvalReport& report, const std::string& path, ReportFormat format) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("write_report: cannot open " + path);
    if (format == ReportFormat::csv)
        write_csv(report, out);
    else
        write_svg(report, out);
    if (!out)
        throw IoError("write_report: write failed for " + path);
}

EvalReport read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("read_report_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "method,test_set,tolerance,mean_f1,n,tp,fp,fn,failures")
        throw FormatError("read_report_csv: bad header in " + path);
    EvalReport report;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ','))
            fields.push_back(field);
        if (fields.size() != 9)
            throw FormatError("read_report_csv: line " + std::to_string(lineno) +
                              ": expected 9 fields");
        EvalRow r;
        r.method = fields[0];
        r.test_set = fields[1];
        r.tolerance = std::stoul(fields[2]);
        r.mean_f1 = std::stod(fields[3]);
        r.n = std::stoul(fields[4]);
        r.tp = std::stoul(fields[5]);
        r.fp = std::stoul(fields[6]);
        r.fn = std::stoul(fields[7]);
        r.failures = std::stoul(fields[8]);
        report.rows.push_back(r);
    }
    return report;
}

} // namespace kb
