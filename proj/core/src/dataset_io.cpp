#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kneebench/synthgen.hpp"

namespace kb {

namespace {

using nlohmann::json;

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    // bare integers must stay valid JSON doubles on reread
    if (s.find_first_of(".eEnN") == std::string::npos)
        s += ".0";
    return s;
}

void append_real_array(std::string& out, const std::vector<double>& vs) {
    out += '[';
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i)
            out += ',';
        out += fmt_real(vs[i]);
    }
    out += ']';
}

void append_spec(std::string& out, const FamilySpec& spec) {
    out += "{\"family\":\"";
    out += family_name(spec.family);
    out += "\",\"params\":{";
    bool first = true;
    for (const auto& [k, v] : spec.params) {
        if (!first)
            out += ',';
        first = false;
        out += '"';
        out += k;
        out += "\":";
        out += fmt_real(v);
    }
    out += "},\"c1\":";
    append_real_array(out, spec.c1);
    out += ",\"c2\":";
    append_real_array(out, spec.c2);
    out += ",\"c3\":";
    append_real_array(out, spec.c3);
    out += ",\"parts\":[";
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
        if (i)
            out += ',';
        append_spec(out, spec.parts[i]);
    }
    out += "],\"x_lb\":";
    out += fmt_real(spec.x_lb);
    out += ",\"x_ub\":";
    out += fmt_real(spec.x_ub);
    out += ",\"flipped\":";
    out += spec.flipped ? "true" : "false";
    out += ",\"knees\":";
    out += std::to_string(spec.knees);
    out += '}';
}

FamilySpec parse_spec(const json& j) {
    FamilySpec spec;
    spec.family = family_from_name(j.at("family").get<std::string>());
    for (const auto& [k, v] : j.at("params").items())
        spec.params[k] = v.get<double>();
    spec.c1 = j.at("c1").get<std::vector<double>>();
    spec.c2 = j.at("c2").get<std::vector<double>>();
    spec.c3 = j.at("c3").get<std::vector<double>>();
    for (const auto& p : j.at("parts"))
        spec.parts.push_back(parse_spec(p));
    spec.x_lb = j.at("x_lb").get<double>();
    spec.x_ub = j.at("x_ub").get<double>();
    spec.flipped = j.at("flipped").get<bool>();
    spec.knees = j.at("knees").get<int>();
    return spec;
}

} // namespace

void write_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("write_dataset: cannot open " + path);

    std::string line;
    line += "{\"generator_version\":\"";
    line += d.generator_version;
    line += "\",\"split\":\"";
    line += split_name(d.split);
    line += "\",\"L\":";
    line += std::to_string(d.L);
    line += ",\"count\":";
    line += std::to_string(d.samples.size());
    line += "}\n";
    out << line;

    for (const auto& s : d.samples) {
        line.clear();
        line += "{\"id\":\"";
        line += s.id;
        line += "\",\"spec\":";
        append_spec(line, s.spec);
        line += ",\"L\":";
        line += std::to_string(s.size());
        line += ",\"L_prime\":";
        line += std::to_string(s.L_prime);
        line += ",\"seed\":";
        line += std::to_string(s.seed);
        line += ",\"x\":";
        append_real_array(line, s.xs);
        line += ",\"y_clean\":";
        append_real_array(line, s.ys_clean);
        line += ",\"y_noisy\":";
        append_real_array(line, s.ys_noisy);
        line += ",\"knee_indices\":[";
        for (std::size_t i = 0; i < s.knee_indices.size(); ++i) {
            if (i)
                line += ',';
            line += std::to_string(s.knee_indices[i]);
        }
        line += "]}\n";
        out << line;
    }
    if (!out)
        throw IoError("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("read_dataset: cannot open " + path);

    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("read_dataset: " + path + " line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        try {
            if (lineno == 1) {
                d.generator_version = j.at("generator_version").get<std::string>();
                d.split = split_from_name(j.at("split").get<std::string>());
                d.L = j.at("L").get<std::size_t>();
                expected = j.at("count").get<std::size_t>();
                continue;
            }
            Sample s;
            s.id = j.at("id").get<std::string>();
            s.spec = parse_spec(j.at("spec"));
            s.L_prime = j.at("L_prime").get<std::size_t>();
            s.seed = j.at("seed").get<std::uint64_t>();
            s.xs = j.at("x").get<std::vector<double>>();
            s.ys_clean = j.at("y_clean").get<std::vector<double>>();
            s.ys_noisy = j.at("y_noisy").get<std::vector<double>>();
            s.knee_indices = j.at("knee_indices").get<std::vector<std::size_t>>();
            d.samples.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw FormatError("read_dataset: " + path + " line " + std::to_string(lineno) + ": " +
                              e.what());
        }
    }
    if (lineno == 0)
        throw FormatError("read_dataset: " + path + ": empty file");
    if (d.samples.size() != expected)
        throw FormatError("read_dataset: " + path + ": header count " + std::to_string(expected) +
                          " but read " + std::to_string(d.samples.size()) + " records (line " +
                          std::to_string(lineno) + ")");
    return d;
}

} // namespace kb
