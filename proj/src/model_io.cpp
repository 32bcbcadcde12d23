#include "dnncal/model_io.hpp"

#include <json.hpp>

#include "dnncal/csv.hpp"
#include "dnncal/errors.hpp"

namespace dnncal {
namespace {

using nlohmann::json;

json matrix_json(const double* data, std::size_t rows, std::size_t cols) {
  return json{{"rows", rows}, {"cols", cols}, {"values", std::vector<double>(data, data + rows * cols)}};
}

std::vector<double> matrix_values(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  if (j.at("rows").get<std::size_t>() != rows || j.at("cols").get<std::size_t>() != cols)
    throw DataError("model file: block '" + what + "' has the wrong shape");
  auto v = j.at("values").get<std::vector<double>>();
  if (v.size() != rows * cols) throw DataError("model file: block '" + what + "' has the wrong number of values");
  return v;
}

}  // namespace

std::string model_to_json(const TrainedModel& model) {
  const NetworkConfig& c = model.config();
  const TrainingConfig& t = model.train_cfg;
  json j;
  j["format"] = "dnncal-model";
  j["schema_version"] = kModelSchemaVersion;
  j["network"] = {{"p", c.p},           {"d_theta", c.d_theta}, {"d_t", c.d_t},       {"d_c", c.d_c},
                  {"widths", c.widths}, {"p_keep", c.p_keep},   {"lambda", c.lambda}, {"tau_set", c.tau_set}};
  j["training"] = {{"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"learning_rate", t.learning_rate},
                   {"min_lr_fraction", t.min_lr_fraction},
                   {"seed", t.seed},
                   {"quantile_epochs", t.quantile_epochs},
                   {"quantile_learning_rate", t.quantile_learning_rate},
                   {"mc_passes", t.mc_passes}};
  json box = json::array();
  for (const auto& b : model.norm.box) box.push_back({b.lo, b.hi});
  j["normalization"] = {{"series_mean", model.norm.series_mean}, {"series_scale", model.norm.series_scale}, {"box", box}};
  json blocks = json::object();
  const double* base = model.net.values().data();
  for (const Block& b : model.net.layout().blocks()) blocks[b.name] = matrix_json(base + b.offset, b.rows, b.cols);
  j["weights"] = blocks;
  json heads = json::array();
  for (const auto& h : model.heads)
    heads.push_back({{"tau", h.tau},
                     {"w", matrix_json(h.w.data(), static_cast<std::size_t>(h.w.rows()), static_cast<std::size_t>(h.w.cols()))},
                     {"a", std::vector<double>(h.a.data(), h.a.data() + h.a.size())}});
  j["heads"] = heads;
  j["loss_history"] = model.loss_history;
  j["quantile_cost"] = model.quantile_cost;
  return j.dump(1) + "\n";
}

TrainedModel model_from_json(const std::string& text, const std::string& source) {
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string()) != "dnncal-model") throw DataError(source + ": not a model file");
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion)
      throw DataError(source + ": unsupported schema version " + std::to_string(version));
    const json& n = j.at("network");
    NetworkConfig c;
    c.p = n.at("p").get<std::size_t>();
    c.d_theta = n.at("d_theta").get<std::size_t>();
    c.d_t = n.at("d_t").get<std::size_t>();
    c.d_c = n.at("d_c").get<std::size_t>();
    c.widths = n.at("widths").get<std::vector<std::size_t>>();
    c.p_keep = n.at("p_keep").get<double>();
    c.lambda = n.at("lambda").get<double>();
    c.tau_set = n.at("tau_set").get<std::vector<double>>();

    TrainedModel m;
    const json& t = j.at("training");
    m.train_cfg.epochs = t.at("epochs").get<std::size_t>();
    m.train_cfg.batch_size = t.at("batch_size").get<std::size_t>();
    m.train_cfg.learning_rate = t.at("learning_rate").get<double>();
    m.train_cfg.min_lr_fraction = t.at("min_lr_fraction").get<double>();
    m.train_cfg.seed = t.at("seed").get<std::uint64_t>();
    m.train_cfg.quantile_epochs = t.at("quantile_epochs").get<std::size_t>();
    m.train_cfg.quantile_learning_rate = t.at("quantile_learning_rate").get<double>();
    m.train_cfg.mc_passes = t.at("mc_passes").get<std::size_t>();

    const json& norm = j.at("normalization");
    m.norm.series_mean = norm.at("series_mean").get<double>();
    m.norm.series_scale = norm.at("series_scale").get<double>();
    for (const auto& b : norm.at("box")) m.norm.box.push_back(Interval{b.at(0).get<double>(), b.at(1).get<double>()});
    if (!(m.norm.series_scale > 0.0)) throw DataError(source + ": series scale must be > 0");
    if (m.norm.box.size() != c.d_theta) throw DataError(source + ": parameter box does not match d_theta");

    m.net = NetworkWeights(c);
    const json& w = j.at("weights");
    double* base = m.net.values().data();
    for (const Block& b : m.net.layout().blocks()) {
      if (!w.contains(b.name)) throw DataError(source + ": missing weight block '" + b.name + "'");
      const auto v = matrix_values(w.at(b.name), b.rows, b.cols, b.name);
      std::copy(v.begin(), v.end(), base + b.offset);
    }
    const std::size_t last = c.widths.back();
    for (const auto& h : j.at("heads")) {
      QuantileHead q;
      q.tau = h.at("tau").get<double>();
      const auto wv = matrix_values(h.at("w"), c.d_theta, last, "head");
      q.w = ConstMatView(wv.data(), static_cast<Eigen::Index>(c.d_theta), static_cast<Eigen::Index>(last));
      const auto av = h.at("a").get<std::vector<double>>();
      if (av.size() != c.d_theta) throw DataError(source + ": head intercept has the wrong length");
      q.a = ConstVecView(av.data(), static_cast<Eigen::Index>(av.size()));
      m.heads.push_back(std::move(q));
    }
    m.loss_history = j.value("loss_history", std::vector<double>{});
    m.quantile_cost = j.value("quantile_cost", std::vector<double>{});
    return m;
  } catch (const json::exception& e) {
    throw DataError(source + ": malformed model file (" + e.what() + ")");
  } catch (const UsageError& e) {
    throw DataError(source + ": invalid network config (" + e.what() + ")");
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_text(path, model_to_json(model));
}

TrainedModel load_model(const std::filesystem::path& path) { return model_from_json(read_text(path), path.string()); }

}  // namespace dnncal
