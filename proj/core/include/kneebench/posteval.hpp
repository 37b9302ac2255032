#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kneebench/detectors.hpp"
#include "kneebench/synthgen.hpp"
#include "kneebench/unetconv.hpp"

namespace kb {

struct NmsConfig {
    double delta = 0.5;
    std::size_t radius = 10;
};

// Keep the highest-scoring candidates with probability >= delta, suppressing
// everything within +-radius of a kept index. Returns sorted indices.
std::vector<std::size_t> nms(const std::vector<double>& probs, const NmsConfig& cfg);

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

// One-to-one matching of sorted index lists with |pred - truth| <= tol.
MatchCounts match_at_tolerance(const std::vector<std::size_t>& pred,
                               const std::vector<std::size_t>& truth, std::size_t tol);

double f1_at_tolerance(const std::vector<std::size_t>& pred,
                       const std::vector<std::size_t>& truth, std::size_t tol);

struct EvalRow {
    std::string method;
    std::string test_set;
    std::size_t tolerance = 0;
    double mean_f1 = 0.0;
    std::size_t n = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t failures = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::map<std::string, std::string> metadata;
};

using MethodFn = std::function<std::vector<std::size_t>(const Sample&)>;

// Classical pipeline: EWM smoothing selected against the clean reference, then
// the named detector ("l", "dfdt", "dfdt-ref", "al", "al-ref", "s",
// "kneedle-proj", "kneedle-rot"); DFDT and AL run on the concavity-translated
// curve. Throws on unknown names or detector failures.
std::vector<std::size_t> classical_detect(const std::string& method, const Sample& sample,
                                          double kneedle_zeta = 0.01);

// Network pipeline: eval-mode forward then NMS.
std::vector<std::size_t> unet_detect(Model& model, const Sample& sample, const NmsConfig& cfg);

// Mean F1 rows for one method over a dataset, one row per tolerance. Samples
// where the method throws score 0 and are counted as failures.
EvalReport evaluate(const std::string& method_name, const MethodFn& method,
                    const Dataset& dataset, const std::vector<std::size_t>& tolerances,
                    int threads = 1);

struct ZetaSweepResult {
    double best_zeta = 0.0;
    std::map<double, double> scores; // zeta -> mean F1 averaged over tolerances
};

ZetaSweepResult zeta_sweep(const Dataset& dataset, const std::vector<double>& zetas,
                           KneedleTransform transform, const std::vector<std::size_t>& tolerances,
                           int threads = 1);

enum class ReportFormat { csv, svg };

void write_report(const EvalReport& report, const std::string& path, ReportFormat format);
EvalReport read_report_csv(const std::string& path);

} // namespace kb
