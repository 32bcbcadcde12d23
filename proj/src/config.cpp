#include "dnncal/config.hpp"

#include <charconv>
#include <map>

#include "dnncal/csv.hpp"
#include "dnncal/errors.hpp"

namespace dnncal {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    const auto item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw UsageError("config key '" + key + "': '" + std::string(v) + "' is not a non-negative integer");
  return out;
}

double to_double(const std::string& key, std::string_view v) {
  try {
    return parse_double(v, "config key '" + key + "'");
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>)
      s += format_double(xs[i]);
    else
      s += std::to_string(xs[i]);
  }
  return s;
}

struct Field {
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class M>
Field size_field(std::string help, M member) {
  return {std::move(help), [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = static_cast<std::size_t>(to_u64(k, v));
          }};
}

template <class M>
Field real_field(std::string help, M member) {
  return {std::move(help), [member](const RunConfig& c) { return format_double(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = to_double(k, v); }};
}

template <class M>
Field path_field(std::string help, M member) {
  return {std::move(help), [member](const RunConfig& c) { return member(c).string(); },
          [member](RunConfig& c, const std::string&, const std::string& v) { member(c) = std::string(trim(v)); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["d_t"] = size_field("lag depth (input window is d_t + 1 wide)", [](auto& c) -> auto& { return c.network.d_t; });
    t["d_c"] = size_field("LSTM cell width", [](auto& c) -> auto& { return c.network.d_c; });
    t["widths"] = {"hidden layer widths, comma separated",
                   [](const RunConfig& c) { return join(c.network.widths); },
                   [](RunConfig& c, const std::string& k, const std::string& v) {
                     std::vector<std::size_t> w;
                     for (const auto& item : split_list(v)) w.push_back(static_cast<std::size_t>(to_u64(k, item)));
                     c.network.widths = w;
                   }};
    t["p_keep"] = real_field("dropout keep probability", [](auto& c) -> auto& { return c.network.p_keep; });
    t["lambda"] = real_field("ridge coefficient on weight matrices", [](auto& c) -> auto& { return c.network.lambda; });
    t["tau_set"] = {"quantile levels, comma separated",
                    [](const RunConfig& c) { return join(c.network.tau_set); },
                    [](RunConfig& c, const std::string& k, const std::string& v) {
                      std::vector<double> taus;
                      for (const auto& item : split_list(v)) taus.push_back(to_double(k, item));
                      c.network.tau_set = taus;
                    }};
    t["epochs"] = size_field("training epochs", [](auto& c) -> auto& { return c.training.epochs; });
    t["batch_size"] = size_field("mini-batch size", [](auto& c) -> auto& { return c.training.batch_size; });
    t["learning_rate"] = real_field("initial Adam learning rate", [](auto& c) -> auto& { return c.training.learning_rate; });
    t["min_lr_fraction"] = real_field("final learning rate as a fraction of the initial one",
                                      [](auto& c) -> auto& { return c.training.min_lr_fraction; });
    t["quantile_epochs"] = size_field("quantile head epochs (0 = same as epochs)",
                                      [](auto& c) -> auto& { return c.training.quantile_epochs; });
    t["quantile_learning_rate"] = real_field("quantile head learning rate",
                                             [](auto& c) -> auto& { return c.training.quantile_learning_rate; });
    t["head_holdout"] = real_field("fraction of design points held out for the quantile heads (0 = fit in sample)",
                                   [](auto& c) -> auto& { return c.training.head_holdout; });
    t["mc_passes"] = size_field("MC dropout passes", [](auto& c) -> auto& { return c.training.mc_passes; });
    t["zeta_min"] = real_field("nugget range, lower", [](auto& c) -> auto& { return c.ranges.zeta.lo; });
    t["zeta_max"] = real_field("nugget range, upper", [](auto& c) -> auto& { return c.ranges.zeta.hi; });
    t["kappa_min"] = real_field("partial sill range, lower", [](auto& c) -> auto& { return c.ranges.kappa.lo; });
    t["kappa_max"] = real_field("partial sill range, upper", [](auto& c) -> auto& { return c.ranges.kappa.hi; });
    t["phi_min"] = real_field("range parameter, lower", [](auto& c) -> auto& { return c.ranges.phi.lo; });
    t["phi_max"] = real_field("range parameter, upper", [](auto& c) -> auto& { return c.ranges.phi.hi; });
    t["n_d"] = size_field("discrepancy realizations per model run", [](auto& c) -> auto& { return c.ranges.n_d; });
    t["n_runs"] = size_field("synthetic ensemble size", [](auto& c) -> auto& { return c.n_runs; });
    t["n_scenarios"] = size_field("synthetic test scenarios", [](auto& c) -> auto& { return c.n_scenarios; });
    t["series_length"] = size_field("synthetic series length p", [](auto& c) -> auto& { return c.series_length; });
    t["seed"] = {"master seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }};
    t["box"] = {"declared parameter box as lo:hi pairs, comma separated (empty = infer)",
                [](const RunConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.box.size(); ++i)
                    s += (i ? "," : "") + format_double(c.box[i].lo) + ":" + format_double(c.box[i].hi);
                  return s;
                },
                [](RunConfig& c, const std::string& k, const std::string& v) {
                  std::vector<Interval> box;
                  for (const auto& item : split_list(v)) {
                    const auto colon = item.find(':');
                    if (colon == std::string::npos) throw UsageError("config key 'box': expected lo:hi, got '" + item + "'");
                    const Interval r{to_double(k, item.substr(0, colon)), to_double(k, item.substr(colon + 1))};
                    if (!(r.lo < r.hi)) throw UsageError("config key 'box': interval '" + item + "' is empty");
                    box.push_back(r);
                  }
                  c.box = box;
                }};
    t["method"] = {"uncertainty method: quantile, mc-dropout or both", [](const RunConfig& c) { return c.method; },
                   [](RunConfig& c, const std::string&, const std::string& v) {
                     const std::string m(trim(v));
                     if (m != "quantile" && m != "mc-dropout" && m != "both")
                       throw UsageError("config key 'method': expected quantile, mc-dropout or both");
                     c.method = m;
                   }};
    t["out"] = path_field("output directory", [](auto& c) -> auto& { return c.out; });
    t["ensemble"] = path_field("ensemble CSV", [](auto& c) -> auto& { return c.ensemble; });
    t["contaminated"] = path_field("contaminated ensemble CSV", [](auto& c) -> auto& { return c.contaminated; });
    t["observation"] = path_field("observation CSV", [](auto& c) -> auto& { return c.observation; });
    t["scenarios"] = path_field("test scenario CSV", [](auto& c) -> auto& { return c.scenarios; });
    t["model"] = path_field("model JSON", [](auto& c) -> auto& { return c.model; });
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

void RunConfig::apply_text(std::string_view text, const std::string& source) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    try {
      set(key, std::string(trim(line.substr(eq + 1))));
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError&) {
    throw UsageError("cannot open config file " + path.string());
  }
  apply_text(text, path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg;
  if (!file.empty()) cfg.apply_file(file);
  for (const auto& [key, value] : flags) cfg.set(key, value);
  return cfg;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& [name, f] : fields()) k.push_back({name, f.help});
    return k;
  }();
  return keys;
}

}  // namespace dnncal
