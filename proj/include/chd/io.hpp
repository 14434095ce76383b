// On-disk formats.
//
//   Field snapshot   CSV, header "# grid: dim,nx[,ny],Lx[,Ly]", one value per
//                    line in row-major order (x fastest).
//   series.csv       full-resolution per-step diagnostics; the column list is
//                    documented in the header row.
//   index.json       trajectory index: times, snapshot file names per stored
//                    step, stride, and the verbatim config document.
//   report.json      one object per audit: name, verdict, tolerance, series,
//                    worst_step.
//
// All writes are atomic (write-temp-then-rename). Doubles are printed with 17
// significant digits so a read-back reproduces them bit-exactly.

#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chd/errors.hpp"
#include "chd/estimates.hpp"
#include "chd/grid.hpp"

namespace chd {

using Json = nlohmann::ordered_json;

inline bool blank_line(const std::string& s) {
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp.string());
        out << content;
        if (!out.good()) throw FormatError("short write on " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- Field CSV ----

inline std::string field_csv_header(const Grid& g) {
    std::ostringstream os;
    os << "# grid: " << g.dim << "," << g.nx;
    if (g.dim == 2) os << "," << g.ny;
    os << "," << fmt_double(g.Lx);
    if (g.dim == 2) os << "," << fmt_double(g.Ly);
    return os.str();
}

inline void write_field_csv(const std::filesystem::path& path, const Field& f) {
    std::ostringstream os;
    os << field_csv_header(f.grid) << "\n";
    for (double x : f.v) os << fmt_double(x) << "\n";
    atomic_write(path, os.str());
}

inline Field read_field_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("# grid:", 0) != 0)
        throw FormatError(path.string() + ": missing '# grid:' header");
    std::string meta = line.substr(7);
    for (auto& c : meta)
        if (c == ',') c = ' ';
    std::istringstream ms(meta);
    int dim = 0;
    if (!(ms >> dim) || (dim != 1 && dim != 2))
        throw FormatError(path.string() + ": bad grid dimension");
    Grid g;
    if (dim == 1) {
        int nx;
        double Lx;
        if (!(ms >> nx >> Lx)) throw FormatError(path.string() + ": bad 1D grid header");
        g = Grid::line(nx, Lx);
    } else {
        int nx, ny;
        double Lx, Ly;
        if (!(ms >> nx >> ny >> Lx >> Ly)) throw FormatError(path.string() + ": bad 2D grid header");
        g = Grid::box(nx, ny, Lx, Ly);
    }
    Field f(g, 0.0);
    int count = 0;
    while (std::getline(in, line)) {
        line = line.substr(0, line.find('#'));
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (blank) continue;
        if (count >= g.cells()) throw FormatError(path.string() + ": too many values");
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str()) throw FormatError(path.string() + ": bad value '" + line + "'");
        if (!std::isfinite(v))
            throw FormatError(path.string() + ": non-finite value at cell " +
                              std::to_string(count));
        f.v[count++] = v;
    }
    if (count != g.cells())
        throw FormatError(path.string() + ": expected " + std::to_string(g.cells()) +
                          " values, got " + std::to_string(count));
    return f;
}

// ---- series.csv ----

inline const std::vector<std::string>& series_columns() {
    static const std::vector<std::string> cols = {
        "time",        "weighted_energy", "cum_dissipation", "phase_energy",
        "min_mu",      "max_mu",          "dtrho_L2",        "xi_L6",
        "h_L6",        "gradK_L2",        "dtmu_L2_cum",     "dtrho_H1_cum",
        "tmu_L2",      "gradK_id_res",    "gradK_id_tol",    "newton_res",
        "picard_delta"};
    return cols;
}

inline std::vector<const std::vector<double>*> series_fields(const StepSeries& s) {
    return {&s.time,        &s.weighted_energy, &s.cum_dissipation, &s.phase_energy,
            &s.min_mu,      &s.max_mu,          &s.dtrho_L2,        &s.xi_L6,
            &s.h_L6,        &s.gradK_L2,        &s.dtmu_L2_cum,     &s.dtrho_H1_cum,
            &s.tmu_L2,      &s.gradK_id_res,    &s.gradK_id_tol,    &s.newton_res,
            &s.picard_delta};
}

inline std::vector<std::vector<double>*> series_fields(StepSeries& s) {
    return {&s.time,        &s.weighted_energy, &s.cum_dissipation, &s.phase_energy,
            &s.min_mu,      &s.max_mu,          &s.dtrho_L2,        &s.xi_L6,
            &s.h_L6,        &s.gradK_L2,        &s.dtmu_L2_cum,     &s.dtrho_H1_cum,
            &s.tmu_L2,      &s.gradK_id_res,    &s.gradK_id_tol,    &s.newton_res,
            &s.picard_delta};
}

inline void write_series_csv(const std::filesystem::path& path, const StepSeries& s) {
    std::ostringstream os;
    os << "step";
    for (const auto& c : series_columns()) os << "," << c;
    os << "\n";
    auto fields = series_fields(s);
    for (int k = 0; k < s.steps(); ++k) {
        os << k;
        for (const auto* f : fields) os << "," << fmt_double((*f)[k]);
        os << "\n";
    }
    atomic_write(path, os.str());
}

inline StepSeries read_series_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
    {
        std::string expect = "step";
        for (const auto& c : series_columns()) expect += "," + c;
        if (line != expect) throw FormatError(path.string() + ": unexpected column header");
    }
    StepSeries s;
    auto fields = series_fields(s);
    int row = 0;
    while (std::getline(in, line)) {
        if (blank_line(line)) continue;
        std::istringstream ls(line);
        std::string tok;
        if (!std::getline(ls, tok, ',')) throw FormatError(path.string() + ": bad row");
        char* end = nullptr;
        const long step = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || step != row)
            throw FormatError(path.string() + ": non-contiguous steps at row " +
                              std::to_string(row));
        for (auto* f : fields) {
            if (!std::getline(ls, tok, ','))
                throw FormatError(path.string() + ": short row " + std::to_string(row));
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str()) throw FormatError(path.string() + ": bad value '" + tok + "'");
            f->push_back(v);
        }
        ++row;
    }
    return s;
}

// ---- audit results / report ----

inline Json audit_to_json(const AuditResult& a) {
    Json j;
    j["name"] = a.name;
    j["verdict"] = a.pass ? "pass" : "fail";
    j["tolerance"] = a.tolerance;
    j["worst_step"] = a.worst_step;
    Json ser = Json::object();
    for (const auto& [k, v] : a.series) ser[k] = v;
    j["series"] = ser;
    Json ex = Json::object();
    for (const auto& [k, v] : a.extras) ex[k] = v;
    j["extras"] = ex;
    return j;
}

inline AuditResult audit_from_json(const Json& j) {
    AuditResult a;
    a.name = j.at("name").get<std::string>();
    a.pass = j.at("verdict").get<std::string>() == "pass";
    a.tolerance = j.at("tolerance").get<double>();
    a.worst_step = j.at("worst_step").get<int>();
    for (const auto& [k, v] : j.at("series").items())
        a.series.emplace_back(k, v.get<std::vector<double>>());
    for (const auto& [k, v] : j.at("extras").items()) a.extras.emplace_back(k, v.get<double>());
    return a;
}

inline Json report_to_json(const std::vector<AuditResult>& audits,
                           const std::string& timestamp) {
    Json j;
    j["format"] = "chd-report-v1";
    j["generated_at"] = timestamp;
    Json arr = Json::array();
    for (const auto& a : audits) arr.push_back(audit_to_json(a));
    j["audits"] = arr;
    return j;
}

inline std::string error_json(const std::string& code, const std::string& message) {
    Json j;
    j["error"]["code"] = code;
    j["error"]["message"] = message;
    return j.dump();
}

}  // namespace chd
