#include "fewstep/results.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "fewstep/errors.hpp"

namespace fewstep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t n = 0; n < line.size(); ++n) {
        const char c = line[n];
        if (quoted) {
            if (c == '"' && n + 1 < line.size() && line[n + 1] == '"') {
                cur += '"';
                ++n;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double parse_double(const std::string& s) {
    if (s.empty()) return kNaN;
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw ParseError("result table: bad number '" + s + "'");
    }
}

int parse_int(const std::string& s) {
    try {
        return s.empty() ? 0 : std::stoi(s);
    } catch (const std::exception&) {
        throw ParseError("result table: bad integer '" + s + "'");
    }
}

}  // namespace

ResultRow::ResultRow()
    : mean_error(kNaN),
      median_error(kNaN),
      max_error(kNaN),
      mean_rel_error(kNaN),
      wall_ms(kNaN),
      baseline_mean_error(kNaN),
      delta_mean_error(kNaN) {}

const std::vector<std::string>& result_columns() {
    static const std::vector<std::string> cols{
        "schedule",       "solver",   "mode",    "nfe",
        "status",         "mean_error", "median_error", "max_error",
        "mean_rel_error", "nfe_used", "wall_ms", "baseline_mean_error",
        "delta_mean_error", "message"};
    return cols;
}

std::string ResultTable::to_csv() const {
    std::ostringstream os;
    const auto& cols = result_columns();
    for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
    os << '\n';
    for (const auto& r : rows) {
        os << quote(r.schedule) << ',' << quote(r.solver) << ',' << quote(r.mode) << ',' << r.nfe << ','
           << quote(r.status) << ',' << fmt(r.mean_error) << ',' << fmt(r.median_error) << ',' << fmt(r.max_error)
           << ',' << fmt(r.mean_rel_error) << ',' << r.nfe_used << ',' << fmt(r.wall_ms) << ','
           << fmt(r.baseline_mean_error) << ',' << fmt(r.delta_mean_error) << ',' << quote(r.message) << '\n';
    }
    return os.str();
}

void ResultTable::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << to_csv();
    if (!f) throw IoError("failed writing '" + path + "'");
}

ResultTable ResultTable::parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("result table: missing header");
    const auto header = split_csv_line(line);
    if (header != result_columns()) throw ParseError("result table: unexpected header '" + line + "'");
    ResultTable t;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) throw ParseError("result table: wrong field count in '" + line + "'");
        ResultRow r;
        r.schedule = f[0];
        r.solver = f[1];
        r.mode = f[2];
        r.nfe = parse_int(f[3]);
        r.status = f[4];
        r.mean_error = parse_double(f[5]);
        r.median_error = parse_double(f[6]);
        r.max_error = parse_double(f[7]);
        r.mean_rel_error = parse_double(f[8]);
        r.nfe_used = parse_int(f[9]);
        r.wall_ms = parse_double(f[10]);
        r.baseline_mean_error = parse_double(f[11]);
        r.delta_mean_error = parse_double(f[12]);
        r.message = f[13];
        t.rows.push_back(std::move(r));
    }
    return t;
}

ResultTable ResultTable::read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open result table '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

std::string ResultTable::to_text() const {
    std::ostringstream os;
    auto num = [](double v) {
        if (std::isnan(v)) return std::string("-");
        std::ostringstream s;
        s << std::scientific << std::setprecision(3) << v;
        return s.str();
    };
    os << std::left << std::setw(10) << "schedule" << std::setw(22) << "solver" << std::setw(10) << "mode"
       << std::right << std::setw(5) << "nfe" << "  " << std::left << std::setw(11) << "status" << std::right
       << std::setw(11) << "mean" << std::setw(11) << "median" << std::setw(11) << "max" << std::setw(11)
       << "baseline" << std::setw(11) << "delta" << '\n';
    for (const auto& r : rows) {
        os << std::left << std::setw(10) << r.schedule << std::setw(22) << r.solver << std::setw(10) << r.mode
           << std::right << std::setw(5) << r.nfe << "  " << std::left << std::setw(11) << r.status << std::right
           << std::setw(11) << num(r.mean_error) << std::setw(11) << num(r.median_error) << std::setw(11)
           << num(r.max_error) << std::setw(11) << num(r.baseline_mean_error) << std::setw(11)
           << num(r.delta_mean_error) << '\n';
    }
    return os.str();
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "iteration,train_loss,val_loss,val_error,r,phase\n";
    for (const auto& h : history) {
        f << h.iteration << ',' << fmt(h.train_loss) << ',' << fmt(h.val_loss) << ',' << fmt(h.val_error) << ','
          << fmt(h.radius) << ',' << quote(h.phase) << '\n';
    }
    if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace fewstep
