// MATPOWER case-file parser and serializer.
//
// Parsing converts MW/MVAr/degree quantities to per-unit/radians; serializing
// converts back. The inverse conversions are nudged by ulps where needed so
// that parse(serialize(parse(f))) reproduces parse(f) bit for bit.
#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "acopf/common.hpp"
#include "acopf/grid.hpp"

namespace acopf {

namespace detail {

constexpr double kDeg2Rad = std::numbers::pi / 180.0;

// parse computed stored = raw / scale; recover a raw that maps back exactly.
inline double invert_div(double stored, double scale) {
    if (stored == 0.0) return 0.0;
    double raw = stored * scale;
    for (int i = 0; i < 64 && raw / scale != stored; ++i) {
        double lim = raw / scale < stored ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
        raw = std::nextafter(raw, lim);
    }
    return raw;
}

// parse computed stored = raw * scale; recover a raw that maps back exactly.
inline double invert_mul(double stored, double scale) {
    if (stored == 0.0) return 0.0;
    double raw = stored / scale;
    for (int i = 0; i < 64 && raw * scale != stored; ++i) {
        double lim = raw * scale < stored ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
        raw = std::nextafter(raw, lim);
    }
    return raw;
}

struct RawRow {
    std::vector<double> values;
    int line = 0;
};

struct CaseText {
    std::string name;
    double base_mva = 0.0;
    bool has_base = false;
    std::map<std::string, std::vector<RawRow>> tables;
    std::string file;

    [[noreturn]] void fail(int line, const std::string& msg) const {
        std::ostringstream ss;
        ss << file << ":" << line << ": " << msg;
        throw MalformedCase(ss.str());
    }
};

inline std::string strip_comment(const std::string& line) {
    bool quote = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '\'') quote = !quote;
        else if (c == '%' && !quote) return line.substr(0, i);
    }
    return line;
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline CaseText scan_case(const std::string& text, const std::string& file) {
    CaseText out;
    out.file = file;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    std::string open_table;

    // Appends numbers from one matrix line to the open table; ';' ends a row,
    // ']' ends the matrix. Returns true when the matrix was closed.
    auto consume_matrix_line = [&out, &lineno](const std::string& table,
                                               const std::string& line) {
        std::string body = line;
        size_t close = body.find(']');
        bool closing = close != std::string::npos;
        if (closing) body = body.substr(0, close);
        auto& rows = out.tables[table];
        RawRow row;
        row.line = lineno;
        const char* p = body.c_str();
        while (*p) {
            while (*p == ' ' || *p == '\t' || *p == ',') ++p;
            if (*p == ';') {
                if (!row.values.empty()) rows.push_back(row);
                row.values.clear();
                ++p;
                continue;
            }
            if (!*p) break;
            char* end = nullptr;
            double v = std::strtod(p, &end);
            if (end == p)
                out.fail(lineno, std::string("expected number, got '") + p + "'");
            row.values.push_back(v);
            p = end;
        }
        if (!row.values.empty()) rows.push_back(row);
        return closing;
    };

    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;

        if (!open_table.empty()) {
            if (consume_matrix_line(open_table, line)) open_table.clear();
            continue;
        }

        if (line.rfind("function", 0) == 0) {
            size_t eq = line.find('=');
            if (eq != std::string::npos) out.name = trim(line.substr(eq + 1));
            if (!out.name.empty() && out.name.back() == ';') {
                out.name.pop_back();
                out.name = trim(out.name);
            }
            continue;
        }

        size_t dot = line.find('.');
        size_t eq = line.find('=');
        if (dot == std::string::npos || eq == std::string::npos || dot > eq) continue;
        std::string key = trim(line.substr(dot + 1, eq - dot - 1));
        std::string rhs = trim(line.substr(eq + 1));

        if (!rhs.empty() && rhs[0] == '[') {
            out.tables[key];
            if (!consume_matrix_line(key, rhs.substr(1))) open_table = key;
        } else if (key == "baseMVA") {
            char* end = nullptr;
            std::string num = rhs;
            if (!num.empty() && num.back() == ';') num.pop_back();
            out.base_mva = std::strtod(num.c_str(), &end);
            if (end == num.c_str()) out.fail(lineno, "bad baseMVA value '" + rhs + "'");
            out.has_base = true;
        }
        // Other scalar/string assignments (version, names) are ignored.
    }
    if (!open_table.empty())
        out.fail(lineno, "unterminated matrix '" + open_table + "'");
    return out;
}

}  // namespace detail

inline Network parse_matpower_case(const std::string& text,
                                   const std::string& file = "<string>") {
    using namespace detail;
    CaseText ct = scan_case(text, file);
    if (!ct.has_base) throw MalformedCase(file + ": missing baseMVA");
    if (ct.base_mva <= 0) throw MalformedCase(file + ": baseMVA must be positive");
    for (const char* t : {"bus", "gen", "branch", "gencost"})
        if (!ct.tables.count(t) || ct.tables[t].empty())
            throw MalformedCase(file + ": missing table '" + t + "'");

    Network net;
    net.base_mva = ct.base_mva;
    net.name = ct.name.empty() ? "case" : ct.name;
    const double base = net.base_mva;

    for (const RawRow& row : ct.tables["bus"]) {
        const auto& v = row.values;
        if (v.size() < 13)
            ct.fail(row.line, "bus row needs 13 columns, found " +
                                  std::to_string(v.size()));
        Bus b;
        b.id = static_cast<int>(v[0]);
        int type = static_cast<int>(v[1]);
        switch (type) {
            case 1: b.kind = BusKind::PQ; break;
            case 2: b.kind = BusKind::PV; break;
            case 3: b.kind = BusKind::Slack; break;
            case 4:
                throw UnsupportedFeature(file + ":" + std::to_string(row.line) +
                                         ": isolated bus (type 4) not supported");
            default:
                ct.fail(row.line, "unknown bus type " + std::to_string(type));
        }
        b.p_load = v[2] / base;
        b.q_load = v[3] / base;
        b.g_shunt = v[4] / base;
        b.b_shunt = v[5] / base;
        b.area = v[6];
        b.v_init = v[7];
        b.delta_init = v[8] * kDeg2Rad;
        b.base_kv = v[9];
        b.zone = v[10];
        b.v_max = v[11];
        b.v_min = v[12];
        b.extra.assign(v.begin() + 13, v.end());
        net.buses.push_back(std::move(b));
    }

    for (const RawRow& row : ct.tables["gen"]) {
        const auto& v = row.values;
        if (v.size() < 10)
            ct.fail(row.line, "gen row needs 10 columns, found " +
                                  std::to_string(v.size()));
        Generator g;
        g.bus_id = static_cast<int>(v[0]);
        g.p_init = v[1] / base;
        g.q_init = v[2] / base;
        g.q_max = v[3] / base;
        g.q_min = v[4] / base;
        g.v_setpoint = v[5];
        g.mbase = v[6];
        g.in_service = v[7] > 0;
        g.p_max = v[8] / base;
        g.p_min = v[9] / base;
        g.extra.assign(v.begin() + 10, v.end());
        net.generators.push_back(std::move(g));
    }

    for (const RawRow& row : ct.tables["branch"]) {
        const auto& v = row.values;
        if (v.size() < 13)
            ct.fail(row.line, "branch row needs 13 columns, found " +
                                  std::to_string(v.size()));
        Branch br;
        br.from_bus = static_cast<int>(v[0]);
        br.to_bus = static_cast<int>(v[1]);
        br.r = v[2];
        br.x = v[3];
        br.b_charging = v[4];
        br.rate_mva = v[5];
        br.rate_b = v[6];
        br.rate_c = v[7];
        br.tap = v[8] == 0.0 ? 1.0 : v[8];
        br.shift = v[9] * kDeg2Rad;
        br.in_service = v[10] > 0;
        br.extra.assign(v.begin() + 11, v.end());
        if (br.in_service && br.r == 0.0 && br.x == 0.0)
            throw SingularBranch(file + ":" + std::to_string(row.line) +
                                 ": branch with zero impedance");
        net.branches.push_back(std::move(br));
    }

    const auto& gencost = ct.tables["gencost"];
    if (gencost.size() != net.generators.size())
        throw MalformedCase(file + ": gencost has " + std::to_string(gencost.size()) +
                            " rows for " + std::to_string(net.generators.size()) +
                            " generators");
    for (size_t i = 0; i < gencost.size(); ++i) {
        const auto& v = gencost[i].values;
        if (v.size() < 4)
            ct.fail(gencost[i].line, "gencost row needs at least 4 columns");
        int model = static_cast<int>(v[0]);
        if (model == 1)
            throw UnsupportedFeature(file + ":" + std::to_string(gencost[i].line) +
                                     ": piecewise-linear cost not supported");
        if (model != 2)
            ct.fail(gencost[i].line, "unknown cost model " + std::to_string(model));
        Generator& g = net.generators[i];
        g.cost_startup = v[1];
        g.cost_shutdown = v[2];
        int ncost = static_cast<int>(v[3]);
        if (ncost < 1 || static_cast<size_t>(4 + ncost) != v.size())
            ct.fail(gencost[i].line, "gencost row expects " + std::to_string(ncost) +
                                         " coefficients");
        g.cost.coefficients.resize(ncost);
        for (int k = 0; k < ncost; ++k) {
            // Highest degree first; scale so evaluation at per-unit power
            // reproduces the original $/hr value.
            int degree = ncost - 1 - k;
            g.cost.coefficients[k] = v[4 + k] * std::pow(base, degree);
        }
    }

    auto problems = validate(net);
    if (!problems.empty()) {
        std::ostringstream ss;
        ss << file << ": invalid case:";
        for (const auto& p : problems) ss << "\n  " << p;
        throw MalformedCase(ss.str());
    }
    return net;
}

inline Network parse_matpower_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_matpower_case(ss.str(), path);
}

inline std::string serialize_case(const Network& net) {
    using namespace detail;
    const double base = net.base_mva;
    std::ostringstream out;
    auto num = [](double v) { return format_double(v); };

    std::string name = net.name.empty() ? "case" : net.name;
    out << "function mpc = " << name << "\n";
    out << "mpc.version = '2';\n\n";
    out << "%% system MVA base\n";
    out << "mpc.baseMVA = " << num(base) << ";\n\n";

    out << "%% bus data\n";
    out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    out << "mpc.bus = [\n";
    for (const Bus& b : net.buses) {
        int type = b.kind == BusKind::Slack ? 3 : b.kind == BusKind::PV ? 2 : 1;
        out << '\t' << b.id << '\t' << type << '\t' << num(invert_div(b.p_load, base))
            << '\t' << num(invert_div(b.q_load, base)) << '\t'
            << num(invert_div(b.g_shunt, base)) << '\t'
            << num(invert_div(b.b_shunt, base)) << '\t' << num(b.area) << '\t'
            << num(b.v_init) << '\t' << num(invert_mul(b.delta_init, kDeg2Rad))
            << '\t' << num(b.base_kv) << '\t' << num(b.zone) << '\t' << num(b.v_max)
            << '\t' << num(b.v_min);
        for (double e : b.extra) out << '\t' << num(e);
        out << ";\n";
    }
    out << "];\n\n";

    out << "%% generator data\n";
    out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
    out << "mpc.gen = [\n";
    for (const Generator& g : net.generators) {
        out << '\t' << g.bus_id << '\t' << num(invert_div(g.p_init, base)) << '\t'
            << num(invert_div(g.q_init, base)) << '\t'
            << num(invert_div(g.q_max, base)) << '\t'
            << num(invert_div(g.q_min, base)) << '\t' << num(g.v_setpoint) << '\t'
            << num(g.mbase) << '\t' << (g.in_service ? 1 : 0) << '\t'
            << num(invert_div(g.p_max, base)) << '\t'
            << num(invert_div(g.p_min, base));
        for (double e : g.extra) out << '\t' << num(e);
        out << ";\n";
    }
    out << "];\n\n";

    out << "%% branch data\n";
    out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus"
           "\tangmin\tangmax\n";
    out << "mpc.branch = [\n";
    for (const Branch& br : net.branches) {
        out << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << num(br.r) << '\t'
            << num(br.x) << '\t' << num(br.b_charging) << '\t' << num(br.rate_mva)
            << '\t' << num(br.rate_b) << '\t' << num(br.rate_c) << '\t'
            << num(br.tap) << '\t' << num(invert_mul(br.shift, kDeg2Rad)) << '\t'
            << (br.in_service ? 1 : 0);
        // Branch rows must carry the angle-difference columns to reparse.
        for (double e : br.extra) out << '\t' << num(e);
        if (br.extra.size() < 1) out << "\t-360";
        if (br.extra.size() < 2) out << "\t360";
        out << ";\n";
    }
    out << "];\n\n";

    out << "%% generator cost data\n";
    out << "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\n";
    out << "mpc.gencost = [\n";
    for (const Generator& g : net.generators) {
        size_t n = g.cost.coefficients.size();
        out << "\t2\t" << num(g.cost_startup) << '\t' << num(g.cost_shutdown) << '\t'
            << n;
        for (size_t k = 0; k < n; ++k) {
            int degree = static_cast<int>(n - 1 - k);
            out << '\t'
                << num(invert_mul(g.cost.coefficients[k], std::pow(base, degree)));
        }
        out << ";\n";
    }
    out << "];\n";
    return out.str();
}

inline void write_matpower_file(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << serialize_case(net);
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace acopf
