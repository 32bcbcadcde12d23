#include "dnncal/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dnncal/errors.hpp"

namespace dnncal {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string cell_ref(const std::string& source, std::size_t row, const std::string& column) {
  return source + ": row " + std::to_string(row) + ", column '" + column + "'";
}

// Number of leading columns named prefix1, prefix2, ... starting at `from`.
std::size_t count_series(const std::vector<std::string>& header, std::size_t from, const std::string& prefix) {
  std::size_t k = 0;
  while (from + k < header.size() && header[from + k] == prefix + std::to_string(k + 1)) ++k;
  return k;
}

struct Layout {
  std::size_t d_theta = 0;
  std::size_t p = 0;
};

Layout ensemble_layout(const NumericTable& t, const std::string& source, std::size_t min_d_theta) {
  Layout l;
  l.d_theta = count_series(t.header, 0, "theta_");
  l.p = count_series(t.header, l.d_theta, "y_");
  if (l.d_theta < min_d_theta) throw DataError(source + ": missing columns theta_1..theta_D");
  if (l.p < 2) throw DataError(source + ": missing columns y_1..y_P (need P >= 2)");
  return l;
}

void expect_trailing(const NumericTable& t, std::size_t from, const std::vector<std::string>& names,
                     const std::string& source) {
  if (t.header.size() != from + names.size()) {
    std::string want;
    for (const auto& n : names) want += (want.empty() ? "" : ",") + n;
    throw DataError(source + ": unexpected columns after the series; expected " +
                    (names.empty() ? std::string("none") : want));
  }
  for (std::size_t k = 0; k < names.size(); ++k)
    if (t.header[from + k] != names[k])
      throw DataError(source + ": missing column '" + names[k] + "' (found '" + t.header[from + k] + "')");
}

std::string header_line(std::size_t d_theta, std::size_t p, const std::vector<std::string>& extra) {
  std::string h;
  for (std::size_t k = 1; k <= d_theta; ++k) h += "theta_" + std::to_string(k) + ",";
  for (std::size_t t = 1; t <= p; ++t) h += "y_" + std::to_string(t) + (t < p || !extra.empty() ? "," : "");
  for (std::size_t k = 0; k < extra.size(); ++k) h += extra[k] + (k + 1 < extra.size() ? "," : "");
  return h + "\n";
}

void append_row(std::string& out, const std::vector<double>& theta, const TimeSeries& y,
                const std::vector<double>& extra) {
  bool first = true;
  auto put = [&](double v) {
    if (!first) out += ',';
    first = false;
    out += format_double(v);
  };
  for (double v : theta) put(v);
  for (double v : y) put(v);
  for (double v : extra) put(v);
  out += '\n';
}

std::size_t as_index(double v, const std::string& where) {
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e15) throw DataError(where + ": expected a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& where) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw DataError(where + ": '" + std::string(text) + "' is not a number");
  if (!std::isfinite(v)) throw DataError(where + ": non-finite value");
  return v;
}

std::size_t NumericTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool NumericTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

NumericTable parse_table(std::string_view text, const std::string& source) {
  NumericTable t;
  std::size_t pos = 0;
  std::size_t row = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (!have_header) {
      for (auto c : cells) {
        if (c.empty()) throw DataError(source + ": empty column name in header");
        t.header.emplace_back(c);
      }
      have_header = true;
      continue;
    }
    ++row;
    if (cells.size() != t.header.size())
      throw DataError(source + ": ragged row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(t.header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) values[c] = parse_double(cells[c], cell_ref(source, row, t.header[c]));
    t.rows.push_back(std::move(values));
  }
  if (!have_header) throw DataError(source + ": empty file (no header)");
  return t;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

NumericTable read_table(const std::filesystem::path& path) { return parse_table(read_text(path), path.string()); }

std::string render_table(const NumericTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.header.size(); ++c) out += (c ? "," : "") + table.header[c];
  out += '\n';
  for (const auto& r : table.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + format_double(r[c]);
    out += '\n';
  }
  return out;
}

std::string render_ensemble(const Ensemble& e) {
  e.validate();
  std::string out = header_line(e.d_theta(), e.p(), {});
  for (std::size_t i = 0; i < e.size(); ++i) append_row(out, e.theta[i], e.y[i], {});
  return out;
}

Ensemble parse_ensemble(std::string_view text, const std::string& source) {
  const NumericTable t = parse_table(text, source);
  const Layout l = ensemble_layout(t, source, 1);
  expect_trailing(t, l.d_theta + l.p, {}, source);
  if (t.rows.empty()) throw DataError(source + ": no model runs");
  Ensemble e;
  for (const auto& r : t.rows) {
    e.theta.emplace_back(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(l.d_theta));
    e.y.emplace_back(r.begin() + static_cast<std::ptrdiff_t>(l.d_theta), r.end());
  }
  e.validate();
  return e;
}

void save_ensemble(const std::filesystem::path& path, const Ensemble& e) { write_text(path, render_ensemble(e)); }

Ensemble load_ensemble(const std::filesystem::path& path) { return parse_ensemble(read_text(path), path.string()); }

void save_contaminated(const std::filesystem::path& path, const ContaminatedSet& c) {
  c.validate();
  std::string out = header_line(c.d_theta(), c.p(), {"i", "j", "zeta", "kappa", "phi"});
  for (std::size_t k = 0; k < c.size(); ++k) {
    const auto& pr = c.provenance[k];
    append_row(out, c.theta[k], c.y[k],
               {static_cast<double>(pr.source), static_cast<double>(pr.realization), pr.params.zeta, pr.params.kappa,
                pr.params.phi});
  }
  write_text(path, out);
}

ContaminatedSet load_contaminated(const std::filesystem::path& path) {
  const std::string source = path.string();
  const NumericTable t = read_table(path);
  const Layout l = ensemble_layout(t, source, 1);
  const std::size_t base = l.d_theta + l.p;
  expect_trailing(t, base, {"i", "j", "zeta", "kappa", "phi"}, source);
  if (t.rows.empty()) throw DataError(source + ": no contaminated runs");
  ContaminatedSet c;
  std::size_t row = 0;
  for (const auto& r : t.rows) {
    ++row;
    c.theta.emplace_back(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(l.d_theta));
    c.y.emplace_back(r.begin() + static_cast<std::ptrdiff_t>(l.d_theta), r.begin() + static_cast<std::ptrdiff_t>(base));
    ContaminationRecord rec;
    rec.source = as_index(r[base], cell_ref(source, row, "i"));
    rec.realization = as_index(r[base + 1], cell_ref(source, row, "j"));
    rec.params = DiscrepancyParams{r[base + 2], r[base + 3], r[base + 4]};
    c.provenance.push_back(rec);
  }
  c.validate();
  return c;
}

void save_observation(const std::filesystem::path& path, const TimeSeries& z) {
  if (z.size() < 2) throw DataError("observation needs at least two time points");
  std::string out = header_line(0, z.size(), {});
  append_row(out, {}, z, {});
  write_text(path, out);
}

TimeSeries load_observation(const std::filesystem::path& path) {
  const std::string source = path.string();
  const NumericTable t = read_table(path);
  const std::size_t p = count_series(t.header, 0, "y_");
  if (p < 2) throw DataError(source + ": missing columns y_1..y_P (need P >= 2)");
  expect_trailing(t, p, {}, source);
  if (t.rows.size() != 1)
    throw DataError(source + ": expected exactly one observation row, found " + std::to_string(t.rows.size()));
  return t.rows.front();
}

void save_scenarios(const std::filesystem::path& path, const std::vector<TestScenario>& s) {
  if (s.empty()) throw DataError("no scenarios to write");
  std::string out = header_line(s.front().theta_true.size(), s.front().z.size(), {"zeta", "kappa", "phi"});
  for (const auto& sc : s) {
    if (sc.theta_true.size() != s.front().theta_true.size() || sc.z.size() != s.front().z.size())
      throw DataError("scenarios have inconsistent shapes");
    append_row(out, sc.theta_true, sc.z, {sc.noise.zeta, sc.noise.kappa, sc.noise.phi});
  }
  write_text(path, out);
}

std::vector<TestScenario> load_scenarios(const std::filesystem::path& path) {
  const std::string source = path.string();
  const NumericTable t = read_table(path);
  const Layout l = ensemble_layout(t, source, 1);
  const std::size_t base = l.d_theta + l.p;
  expect_trailing(t, base, {"zeta", "kappa", "phi"}, source);
  if (t.rows.empty()) throw DataError(source + ": no scenarios");
  std::vector<TestScenario> out;
  for (const auto& r : t.rows) {
    TestScenario s;
    s.theta_true.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(l.d_theta));
    s.z.assign(r.begin() + static_cast<std::ptrdiff_t>(l.d_theta), r.begin() + static_cast<std::ptrdiff_t>(base));
    s.noise = DiscrepancyParams{r[base], r[base + 1], r[base + 2]};
    out.push_back(std::move(s));
  }
  return out;
}

void save_estimate(const std::filesystem::path& path, const CalibrationEstimate& e) {
  std::string out = "parameter,median,lower,upper\n";
  for (std::size_t k = 0; k < e.median.size(); ++k)
    out += std::to_string(k + 1) + "," + format_double(e.median[k]) + "," + format_double(e.lower[k]) + "," +
           format_double(e.upper[k]) + "\n";
  write_text(path, out);
}

std::string render_metrics(const std::vector<MetricsRow>& rows) {
  std::string out = "parameter,method,bias,rmse,pi_length,pi_coverage\n";
  for (const auto& r : rows)
    out += std::to_string(r.parameter) + "," + to_string(r.method) + "," + format_double(r.bias) + "," +
           format_double(r.rmse) + "," + format_double(r.pi_length) + "," + format_double(r.pi_coverage) + "\n";
  return out;
}

void save_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  write_text(path, render_metrics(rows));
}

}  // namespace dnncal
