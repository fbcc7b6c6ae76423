#include "flt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flt/error.hpp"
#include "flt/placement.hpp"
#include "flt/secure.hpp"
#include "json.hpp"

namespace flt {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<LayerSpec> default_layers(int feature_dim, int num_classes) {
  const auto in = static_cast<std::size_t>(feature_dim);
  const auto out = static_cast<std::size_t>(num_classes);
  return {
      {"feature1", in, 32, Activation::kRelu, Visibility::kCommon},
      {"feature2", 32, 32, Activation::kRelu, Visibility::kCommon},
      {"head", 32, out, Activation::kSoftmaxOutput, Visibility::kPrivate},
  };
}

std::vector<LayerSpec> convex_layers(int feature_dim, int num_classes) {
  return {{"linear", static_cast<std::size_t>(feature_dim), static_cast<std::size_t>(num_classes),
           Activation::kSoftmaxOutput, Visibility::kCommon}};
}

std::vector<LayerSpec> model_layers(const ExperimentConfig& c) {
  if (c.model.convex) return convex_layers(c.dataset.feature_dim, c.dataset.num_classes);
  if (!c.model.layers.empty()) return c.model.layers;
  return default_layers(c.dataset.feature_dim, c.dataset.num_classes);
}

ExperimentConfig resolved(ExperimentConfig c, std::uint64_t seed) {
  c.seed = seed;
  c.dataset.seed = seed;
  c.federation.seed = seed;
  c.federation.num_clients = c.dataset.num_clients;
  if (c.model.convex) c.federation.batch_size = 0;
  return c;
}

ExperimentConfig resolved(const ExperimentConfig& c) { return resolved(c, c.seed); }

void validate(const ExperimentConfig& c) {
  validate(c.dataset);
  validate(c.federation);
  if (c.federation.num_clients != c.dataset.num_clients) {
    throw ConfigError("federation.num_clients must equal dataset.num_clients");
  }
  const auto specs = model_layers(c);
  try {
    validate_specs(specs);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.layers: ") + e.what());
  }
  if (specs.front().input_dim != static_cast<std::size_t>(c.dataset.feature_dim)) {
    throw ConfigError("model.layers[0].input_dim must equal dataset.feature_dim");
  }
  if (specs.back().output_dim != static_cast<std::size_t>(c.dataset.num_classes)) {
    throw ConfigError("model.layers: last output_dim must equal dataset.num_classes");
  }
  const auto& col = c.collaboration;
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(col.alpha_exp) || !unit(col.beta_expertise) ||
      std::abs(col.alpha_exp + col.beta_expertise - 1.0) > 1e-12) {
    throw ConfigError("collaboration.alpha_exp + collaboration.beta_expertise must equal 1");
  }
  if (!unit(col.beta_resilience)) throw ConfigError("collaboration.beta_resilience must lie in [0, 1]");
  if (col.rounds < 1) throw ConfigError("collaboration.rounds must be >= 1");
  for (int k : col.model_counts) {
    if (k < 1 || k > c.dataset.num_clients) {
      throw ConfigError("collaboration.model_counts entries must lie in [1, num_clients]");
    }
  }
  const auto& an = c.anomaly;
  if (!(an.detector.theta > 0.0)) throw ConfigError("anomaly.theta must be positive");
  if (!unit(an.detector.beta_poison)) throw ConfigError("anomaly.beta_poison must lie in [0, 1]");
  if (!(an.zscore_threshold > 0.0)) throw ConfigError("anomaly.zscore_threshold must be positive");
  if (an.detection_rounds < 1) throw ConfigError("anomaly.detection_rounds must be >= 1");
  if (!(an.attack.delta_scale >= 0.0) || !std::isfinite(an.attack.delta_scale)) {
    throw ConfigError("anomaly.attack.delta_scale must be nonnegative");
  }
  if (an.attack.kind == AttackKind::kLabelFlip && !an.attack.targets.empty() &&
      !(an.attack.delta_scale > 0.0 && an.attack.delta_scale <= 1.0)) {
    throw ConfigError("anomaly.attack.delta_scale is the flipped fraction for label_flip; must lie in (0, 1]");
  }
  if (an.attack.kind == AttackKind::kLabelFlip && an.attack.frozen) {
    throw ConfigError("anomaly.attack.frozen requires a parameter attack");
  }
  for (int t : an.attack.targets) {
    if (t < 0 || t >= c.dataset.num_clients) throw ConfigError("anomaly.attack.targets out of range");
  }
  for (double d : an.grid_delta_scales) {
    if (!(d >= 0.0)) throw ConfigError("anomaly.grid_delta_scales entries must be nonnegative");
  }
  for (int k : an.grid_attackers) {
    if (k < 0 || k >= c.dataset.num_clients) {
      throw ConfigError("anomaly.grid_attackers entries must lie in [0, num_clients)");
    }
  }
  const auto& en = c.encryption;
  if (en.key_bits < 512 || en.key_bits % 2 != 0) {
    throw ConfigError("encryption.key_bits must be an even number >= 512");
  }
  if (en.scale_bits < 1 || en.scale_bits > 40) throw ConfigError("encryption.scale_bits must lie in [1, 40]");
  if (!(en.clamp_range > 0.0)) throw ConfigError("encryption.clamp_range must be positive");
  if (!unit(en.gamma)) throw ConfigError("encryption.gamma must lie in [0, 1]");
  const auto& a = c.analysis;
  if (a.rounds < 0) throw ConfigError("analysis.rounds must be >= 0");
  if (!(a.frozen_delta_scale >= 0.0)) throw ConfigError("analysis.frozen_delta_scale must be nonnegative");
  if (a.first_checked_round < 1) throw ConfigError("analysis.first_checked_round must be >= 1");
  if (!unit(a.required_pass_rate)) throw ConfigError("analysis.required_pass_rate must lie in [0, 1]");
  if (c.sweep_seeds.empty()) throw ConfigError("sweep_seeds must not be empty");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

namespace {

// Reads one JSON object, rejecting unknown keys and naming fields in errors.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + " has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown field " + field(it.key()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E, typename F>
E parse_enum(Section& s, const char* key, E fallback, F parse) {
  std::string text;
  s.read(key, text);
  if (text.empty()) return fallback;
  try {
    return parse(text);
  } catch (const Error&) {
    throw ConfigError(s.field(key) + ": unknown value '" + text + "'");
  }
}

ExperimentConfig from_json(const json& root) {
  ExperimentConfig c;
  Section top(root, "");
  top.read("seed", c.seed);
  top.read("placement_instance", c.placement_instance);
  top.read("output_dir", c.output_dir);
  top.read("sweep_seeds", c.sweep_seeds);

  if (top.has("dataset")) {
    Section s(top.at("dataset"), "dataset");
    auto& d = c.dataset;
    s.read("num_clients", d.num_clients);
    s.read("num_classes", d.num_classes);
    s.read("feature_dim", d.feature_dim);
    s.read("samples_per_client", d.samples_per_client);
    s.read("dirichlet_alpha", d.dirichlet_alpha);
    s.read("detection_size", d.detection_size);
    s.read("num_edge_nodes", d.num_edge_nodes);
    s.read("test_size", d.test_size);
    s.read("class_spread", d.class_spread);
    s.read("cluster_std", d.cluster_std);
    s.finish();
  }
  if (top.has("model")) {
    Section s(top.at("model"), "model");
    s.read("convex", c.model.convex);
    if (s.has("layers")) {
      const auto& arr = s.at("layers");
      if (!arr.is_array()) throw ConfigError("model.layers must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Section l(arr[i], "model.layers[" + std::to_string(i) + "]");
        LayerSpec spec;
        l.read("name", spec.name);
        l.read("input_dim", spec.input_dim);
        l.read("output_dim", spec.output_dim);
        spec.activation = parse_enum(l, "activation", Activation::kRelu, parse_activation);
        spec.visibility = parse_enum(l, "visibility", Visibility::kCommon, parse_visibility);
        l.finish();
        c.model.layers.push_back(spec);
      }
    }
    s.finish();
  }
  if (top.has("federation")) {
    Section s(top.at("federation"), "federation");
    auto& f = c.federation;
    s.read("epochs", f.epochs);
    s.read("lr_min", f.lr_min);
    s.read("lr_max", f.lr_max);
    s.read("adapt_min", f.adapt_min);
    s.read("adapt_max", f.adapt_max);
    s.read("comp_min", f.comp_min);
    s.read("comp_max", f.comp_max);
    s.read("local_steps_per_round", f.local_steps_per_round);
    s.read("batch_size", f.batch_size);
    s.read("comp_threshold", f.comp_threshold);
    f.scope = parse_enum(s, "scope", f.scope, parse_aggregation_scope);
    s.read("parallel", f.parallel);
    s.finish();
  }
  if (top.has("collaboration")) {
    Section s(top.at("collaboration"), "collaboration");
    auto& col = c.collaboration;
    s.read("alpha_exp", col.alpha_exp);
    s.read("beta_expertise", col.beta_expertise);
    s.read("model_counts", col.model_counts);
    s.read("beta_resilience", col.beta_resilience);
    s.read("rounds", col.rounds);
    s.finish();
  }
  if (top.has("anomaly")) {
    Section s(top.at("anomaly"), "anomaly");
    auto& a = c.anomaly;
    s.read("theta", a.detector.theta);
    s.read("beta_poison", a.detector.beta_poison);
    a.detector.mode = parse_enum(s, "mode", a.detector.mode, parse_flag_mode);
    s.read("exclude_flagged", a.exclude_flagged);
    s.read("zscore_threshold", a.zscore_threshold);
    s.read("grid_delta_scales", a.grid_delta_scales);
    s.read("grid_attackers", a.grid_attackers);
    s.read("detection_rounds", a.detection_rounds);
    if (s.has("attack")) {
      Section at(s.at("attack"), "anomaly.attack");
      a.attack.kind = parse_enum(at, "kind", a.attack.kind, parse_attack_kind);
      at.read("delta_scale", a.attack.delta_scale);
      at.read("targets", a.attack.targets);
      at.read("frozen", a.attack.frozen);
      at.finish();
    }
    s.finish();
  }
  if (top.has("encryption")) {
    Section s(top.at("encryption"), "encryption");
    auto& e = c.encryption;
    s.read("enabled", e.enabled);
    s.read("key_bits", e.key_bits);
    s.read("scale_bits", e.scale_bits);
    s.read("clamp_range", e.clamp_range);
    s.read("gamma", e.gamma);
    s.finish();
  }
  if (top.has("analysis")) {
    Section s(top.at("analysis"), "analysis");
    auto& a = c.analysis;
    s.read("lemma", a.lemma);
    s.read("theorem", a.theorem);
    s.read("privacy", a.privacy);
    s.read("rounds", a.rounds);
    s.read("frozen_delta_scale", a.frozen_delta_scale);
    s.read("first_checked_round", a.first_checked_round);
    s.read("required_pass_rate", a.required_pass_rate);
    s.read("required_privacy_gap", a.required_privacy_gap);
    s.finish();
  }
  top.finish();
  return resolved(c);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto c = from_json(root);
  validate(c);
  return c;
}

std::string serialize_config(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  const auto& d = c.dataset;
  j["dataset"] = {{"num_clients", d.num_clients},
                  {"num_classes", d.num_classes},
                  {"feature_dim", d.feature_dim},
                  {"samples_per_client", d.samples_per_client},
                  {"dirichlet_alpha", d.dirichlet_alpha},
                  {"detection_size", d.detection_size},
                  {"num_edge_nodes", d.num_edge_nodes},
                  {"test_size", d.test_size},
                  {"class_spread", d.class_spread},
                  {"cluster_std", d.cluster_std}};
  ordered_json layers = ordered_json::array();
  for (const auto& l : c.model.layers) {
    layers.push_back({{"name", l.name},
                      {"input_dim", l.input_dim},
                      {"output_dim", l.output_dim},
                      {"activation", to_string(l.activation)},
                      {"visibility", to_string(l.visibility)}});
  }
  j["model"] = {{"convex", c.model.convex}, {"layers", layers}};
  const auto& f = c.federation;
  j["federation"] = {{"epochs", f.epochs},
                     {"lr_min", f.lr_min},
                     {"lr_max", f.lr_max},
                     {"adapt_min", f.adapt_min},
                     {"adapt_max", f.adapt_max},
                     {"comp_min", f.comp_min},
                     {"comp_max", f.comp_max},
                     {"local_steps_per_round", f.local_steps_per_round},
                     {"batch_size", f.batch_size},
                     {"comp_threshold", f.comp_threshold},
                     {"scope", to_string(f.scope)},
                     {"parallel", f.parallel}};
  const auto& col = c.collaboration;
  j["collaboration"] = {{"alpha_exp", col.alpha_exp},
                        {"beta_expertise", col.beta_expertise},
                        {"model_counts", col.model_counts},
                        {"beta_resilience", col.beta_resilience},
                        {"rounds", col.rounds}};
  const auto& a = c.anomaly;
  j["anomaly"] = {{"theta", a.detector.theta},
                  {"beta_poison", a.detector.beta_poison},
                  {"mode", to_string(a.detector.mode)},
                  {"attack",
                   {{"kind", to_string(a.attack.kind)},
                    {"delta_scale", a.attack.delta_scale},
                    {"targets", a.attack.targets},
                    {"frozen", a.attack.frozen}}},
                  {"exclude_flagged", a.exclude_flagged},
                  {"zscore_threshold", a.zscore_threshold},
                  {"grid_delta_scales", a.grid_delta_scales},
                  {"grid_attackers", a.grid_attackers},
                  {"detection_rounds", a.detection_rounds}};
  const auto& e = c.encryption;
  j["encryption"] = {{"enabled", e.enabled},
                     {"key_bits", e.key_bits},
                     {"scale_bits", e.scale_bits},
                     {"clamp_range", e.clamp_range},
                     {"gamma", e.gamma}};
  const auto& an = c.analysis;
  j["analysis"] = {{"lemma", an.lemma},
                   {"theorem", an.theorem},
                   {"privacy", an.privacy},
                   {"rounds", an.rounds},
                   {"frozen_delta_scale", an.frozen_delta_scale},
                   {"first_checked_round", an.first_checked_round},
                   {"required_pass_rate", an.required_pass_rate},
                   {"required_privacy_gap", an.required_privacy_gap}};
  j["placement_instance"] = c.placement_instance;
  j["output_dir"] = c.output_dir;
  j["sweep_seeds"] = c.sweep_seeds;
  return j.dump(2);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const ordered_json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_rounds_csv(const fs::path& path, const TrainingRun& run,
                      const std::vector<LayerSpec>& specs) {
  auto out = open_out(path);
  out << "round,client_id,loss,test_accuracy,lyapunov_value,update_norm,lambda,"
         "consensus_accuracy,mean_compatibility,flagged";
  for (const auto& s : specs) out << ",resilience_" << s.name;
  out << '\n';
  for (const auto& rec : run.rounds) {
    const auto& m = rec.metrics;
    const std::size_t n = m.per_client_loss.size();
    double mean_loss = 0.0;
    for (double l : m.per_client_loss) mean_loss += l / static_cast<double>(n);
    out << m.round << ",GLOBAL," << num(mean_loss) << ',' << num(m.global_test_accuracy) << ','
        << num(m.lyapunov_value) << ',' << num(m.aggregate_update_norm) << ',';
    double mean_lambda = 0.0;
    for (double l : rec.lambda) mean_lambda += l / static_cast<double>(rec.lambda.size());
    out << (rec.lambda.empty() ? "" : num(mean_lambda)) << ',' << num(rec.consensus_accuracy) << ','
        << num(rec.mean_compatibility) << ',' << rec.flagged.size();
    for (std::size_t k = 0; k < specs.size(); ++k) {
      out << ',' << (k < rec.resilience.size() && !std::isnan(rec.resilience[k]) ? num(rec.resilience[k]) : "");
    }
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      out << m.round << ',' << i << ',' << num(m.per_client_loss[i]) << ','
          << num(m.per_client_accuracy[i]) << ",," << num(m.per_client_update_norm[i]) << ','
          << (i < rec.lambda.size() ? num(rec.lambda[i]) : "") << ",,,"
          << (rec.flagged.count(static_cast<int>(i)) ? 1 : 0);
      for (std::size_t k = 0; k < specs.size(); ++k) out << ',';
      out << '\n';
    }
  }
}

ordered_json detection_json(const TrainingRun& run, const ExperimentConfig& c) {
  ordered_json j;
  j["theta"] = c.anomaly.detector.theta;
  j["beta_poison"] = c.anomaly.detector.beta_poison;
  j["mode"] = to_string(c.anomaly.detector.mode);
  j["attackers"] = c.anomaly.attack.targets;
  ordered_json rounds = ordered_json::array();
  for (const auto& rec : run.rounds) {
    ordered_json r;
    r["round"] = rec.metrics.round;
    r["flagged"] = rec.flagged;
    r["verified"] = rec.verified;
    r["zscore_flagged"] = rec.zscore_flagged;
    ordered_json nodes = ordered_json::array();
    for (const auto& rep : rec.reports) {
      ordered_json node;
      node["node"] = rep.node_id;
      node["v_mean"] = rep.distances.v_mean;
      ordered_json devices = ordered_json::array();
      for (std::size_t k = 0; k < rep.device_ids.size(); ++k) {
        ordered_json d;
        d["id"] = rep.device_ids[k];
        d["v"] = rep.distances.v[k];
        d["v_loo"] = rep.distances.v_loo[k];
        d["flagged"] = rep.flagged.count(k) > 0;
        auto e = rep.accuracy_diffs.find(k);
        d["e"] = e == rep.accuracy_diffs.end() ? json(nullptr) : json(e->second);
        d["verified"] = rep.verified_poisoners.count(k) > 0;
        devices.push_back(d);
      }
      node["devices"] = devices;
      nodes.push_back(node);
    }
    r["nodes"] = nodes;
    rounds.push_back(r);
  }
  j["rounds"] = rounds;
  return j;
}

void write_traces_csv(const fs::path& path, const std::vector<DivergencePoint>& lemma,
                      const std::vector<MarginPoint>& theorem) {
  auto out = open_out(path);
  out << "round,d_c,d_ce,d_p,margin_common,margin_full,margin_private\n";
  const std::size_t rows = std::max(lemma.size(), theorem.size());
  for (std::size_t t = 0; t < rows; ++t) {
    out << (t < lemma.size() ? lemma[t].round : theorem[t].round);
    if (t < lemma.size()) {
      out << ',' << num(lemma[t].d_c) << ',' << num(lemma[t].d_ce) << ',' << num(lemma[t].d_p);
    } else {
      out << ",,,";
    }
    if (t < theorem.size()) {
      out << ',' << num(theorem[t].common) << ',' << num(theorem[t].full) << ','
          << num(theorem[t].priv);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title, const std::string& x_label,
                      const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double lo = INFINITY, hi = -INFINITY;
  std::size_t len = 0;
  for (const auto& s : series) {
    len = std::max(len, s.values.size());
    for (double v : s.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi == lo) hi = lo + 1.0;
  auto x = [&](std::size_t i) {
    return L + (len > 1 ? static_cast<double>(i) / static_cast<double>(len - 1) : 0.5) * (W - L - R);
  };
  auto y = [&](double v) { return T + (1.0 - (v - lo) / (hi - lo)) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xml_escape(x_label) << "</text>\n";
  char buf[64];
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    std::snprintf(buf, sizeof buf, "%.3g", v);
    out << "<text x=\"" << L - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
        << buf << "</text>\n";
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (!std::isfinite(s.values[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x(i), y(s.values[i]));
      out << buf;
    }
    out << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << xml_escape(s.name)
        << "</text>\n";
  }
  out << "</svg>\n";
}

RunSummary run_experiment(const ExperimentConfig& raw, const std::string& out_dir, bool plots) {
  using Clock = std::chrono::steady_clock;
  const auto c = resolved(raw);
  validate(c);
  const fs::path dir(out_dir);
  fs::create_directories(dir / "checkpoints");
  if (plots) fs::create_directories(dir / "plots");
  ordered_json timing;
  auto timed = [&](const char* name, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    timing[name] = std::chrono::duration<double>(Clock::now() - t0).count();
  };

  const auto specs = model_layers(c);
  TrainingRun run;
  timed("training_s", [&] { run = run_screened_training(c, c.federation.epochs); });
  write_rounds_csv(dir / "rounds.csv", run, specs);
  write_json(dir / "detection.json", detection_json(run, c));
  save_checkpoint_file(run.global, (dir / "checkpoints" / "global.ckpt").string());
  for (std::size_t i = 0; i < run.final_models.size(); ++i) {
    save_checkpoint_file(run.final_models[i],
                         (dir / "checkpoints" / ("client_" + std::to_string(i) + ".ckpt")).string());
  }

  RunSummary summary;
  const auto& last = run.rounds.back().metrics;
  summary.final_accuracy = last.global_test_accuracy;
  summary.final_lyapunov = last.lyapunov_value;
  std::vector<double> v_history;
  for (const auto& rec : run.rounds) v_history.push_back(rec.metrics.lyapunov_value);
  if (v_history.size() >= 2) {
    const std::size_t window = std::min<std::size_t>(10, v_history.size() - 1);
    summary.convergence = to_string(check_convergence(v_history, 1e-4, window));
  } else {
    summary.convergence = "n/a";
  }

  std::vector<DivergencePoint> lemma;
  std::vector<MarginPoint> theorem;
  const int first = c.analysis.first_checked_round;
  bool checks = true;
  ordered_json check_list = ordered_json::array();
  auto check = [&](const std::string& name, bool ok, double value, double required) {
    check_list.push_back({{"name", name}, {"pass", ok}, {"value", value}, {"required", required}});
    checks = checks && ok;
  };
  if (c.analysis.lemma) {
    timed("lemma_s", [&] { lemma = run_lemma_trace(c, 0); });
    summary.lemma_pass_rate = lemma_pass_rate(lemma, first);
    check("lemma_ordering", *summary.lemma_pass_rate >= c.analysis.required_pass_rate,
          *summary.lemma_pass_rate, c.analysis.required_pass_rate);
  }
  if (c.analysis.theorem) {
    timed("theorem_s", [&] { theorem = run_theorem_trace(c, 0, c.analysis.frozen_delta_scale); });
    summary.theorem_pass_rate = theorem_pass_rate(theorem, first);
    check("theorem_margin", *summary.theorem_pass_rate >= c.analysis.required_pass_rate,
          *summary.theorem_pass_rate, c.analysis.required_pass_rate);
  }
  if (!lemma.empty() || !theorem.empty()) write_traces_csv(dir / "traces.csv", lemma, theorem);
  if (c.analysis.privacy) {
    timed("privacy_s", [&] { summary.privacy = run_privacy_probe(c, 0); });
    const double gap = summary.privacy->full_accuracy - summary.privacy->layered_accuracy;
    check("privacy_gap", gap >= c.analysis.required_privacy_gap, gap, c.analysis.required_privacy_gap);
  }
  if (c.encryption.enabled) {
    summary.security = security_metric(encryption_strength(c.encryption.key_bits),
                                       transfer_efficiency(run.plaintext_bytes, run.ciphertext_bytes),
                                       c.encryption.gamma);
    const double bound = c.dataset.num_clients * std::ldexp(1.0, -c.encryption.scale_bits);
    check("secure_aggregation_error", run.max_secure_deviation <= bound, run.max_secure_deviation, bound);
  }
  summary.checks_passed = checks;

  ordered_json placement;
  if (!c.placement_instance.empty()) {
    const auto problem = load_placement_problem(c.placement_instance);
    const auto greedy = solve_greedy(problem);
    placement["greedy"] = json::parse(placement_plan_to_json(problem, greedy));
    if (problem.tasks.size() <= 20) {
      placement["exact"] = json::parse(placement_plan_to_json(problem, solve_exact(problem)));
    }
    write_json(dir / "placement.json", placement);
  }

  ordered_json s;
  s["seed"] = c.seed;
  s["rounds"] = c.federation.epochs;
  s["scope"] = to_string(c.federation.scope);
  s["final_accuracy"] = summary.final_accuracy;
  ordered_json per_client = ordered_json::array();
  for (double a : last.per_client_accuracy) per_client.push_back(a);
  s["final_client_accuracy"] = per_client;
  s["final_lyapunov"] = summary.final_lyapunov;
  s["convergence"] = summary.convergence;
  s["final_consensus_accuracy"] = run.rounds.back().consensus_accuracy;
  s["lemma_pass_rate"] = opt_json(summary.lemma_pass_rate);
  s["theorem_pass_rate"] = opt_json(summary.theorem_pass_rate);
  if (summary.privacy) {
    s["privacy"] = {{"layered_probe_accuracy", summary.privacy->layered_accuracy},
                    {"full_probe_accuracy", summary.privacy->full_accuracy},
                    {"chance", summary.privacy->chance},
                    {"layered_privacy_loss", summary.privacy->layered_loss()},
                    {"full_privacy_loss", summary.privacy->full_loss()}};
  } else {
    s["privacy"] = nullptr;
  }
  if (c.encryption.enabled) {
    s["security"] = {{"sec", *summary.security},
                     {"encryption_strength", encryption_strength(c.encryption.key_bits)},
                     {"transfer_efficiency", transfer_efficiency(run.plaintext_bytes, run.ciphertext_bytes)},
                     {"plaintext_bytes", run.plaintext_bytes},
                     {"ciphertext_bytes", run.ciphertext_bytes},
                     {"max_abs_error_vs_plaintext", run.max_secure_deviation}};
  } else {
    s["security"] = nullptr;
  }
  DetectionCell clmd, z;
  clmd.detector = "clmd_common";
  z.detector = "zscore_full";
  for (const auto& rec : run.rounds) {
    for (int j = 0; j < c.dataset.num_clients; ++j) {
      const bool a = rec.attackers.count(j) > 0;
      for (auto* cell : {&clmd, &z}) {
        const bool f = (cell == &clmd ? rec.flagged : rec.zscore_flagged).count(j) > 0;
        if (f && a) ++cell->tp;
        else if (f) ++cell->fp;
        else if (a) ++cell->fn;
        else ++cell->tn;
      }
    }
  }
  ordered_json det = ordered_json::array();
  for (auto* cell : {&clmd, &z}) {
    finalize(*cell);
    det.push_back({{"detector", cell->detector},
                   {"tp", cell->tp},
                   {"fp", cell->fp},
                   {"fn", cell->fn},
                   {"tn", cell->tn},
                   {"precision", opt_json(cell->precision)},
                   {"recall", opt_json(cell->recall)},
                   {"f1", cell->f1},
                   {"false_positive_rate", cell->false_positive_rate}});
  }
  s["detection"] = det;
  s["checks"] = check_list;
  s["checks_passed"] = checks;
  write_json(dir / "summary.json", s);

  double det_ms = 0.0;
  for (const auto& rec : run.rounds) det_ms += rec.detection_ms;
  timing["detection_ms_per_round"] = det_ms / static_cast<double>(run.rounds.size());
  write_json(dir / "timing.json", timing);

  if (plots) {
    std::vector<double> acc, cons, v;
    for (const auto& rec : run.rounds) {
      acc.push_back(rec.metrics.global_test_accuracy);
      cons.push_back(rec.consensus_accuracy);
      v.push_back(rec.metrics.lyapunov_value);
    }
    write_line_chart((dir / "plots" / "accuracy.svg").string(), "Test accuracy", "round",
                     {{"personalized mean", acc}, {"consensus", cons}});
    write_line_chart((dir / "plots" / "lyapunov.svg").string(), "Lyapunov value V(t)", "round",
                     {{"V", v}});
    if (!lemma.empty()) {
      std::vector<double> dc, dce, dp;
      for (const auto& p : lemma) dc.push_back(p.d_c), dce.push_back(p.d_ce), dp.push_back(p.d_p);
      write_line_chart((dir / "plots" / "divergence.svg").string(), "Distance from benchmark", "round",
                       {{"d_c", dc}, {"d_ce", dce}, {"d_p", dp}});
    }
    if (!theorem.empty()) {
      std::vector<double> mc, mf, mp;
      for (const auto& p : theorem) mc.push_back(p.common), mf.push_back(p.full), mp.push_back(p.priv);
      write_line_chart((dir / "plots" / "margins.svg").string(), "Attacker deviation ratio", "round",
                       {{"common", mc}, {"full", mf}, {"private", mp}});
    }
  }
  return summary;
}

void write_collab_sweep(const CollabSweep& sweep, const std::string& out_dir, bool plots) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  auto out = open_out(dir / "collab_sweep.csv");
  out << "count,seed,consensus_accuracy\n";
  for (const auto& r : sweep.rows) {
    out << r.count << ',' << (r.seed ? std::to_string(*r.seed) : std::string("mean")) << ','
        << num(r.accuracy) << '\n';
  }
  ordered_json j;
  j["counts"] = sweep.counts;
  j["mean_accuracy"] = sweep.mean_accuracy;
  j["trend_holds"] = sweep.trend_holds;
  write_json(dir / "collab_summary.json", j);
  if (plots) {
    fs::create_directories(dir / "plots");
    write_line_chart((dir / "plots" / "collaboration.svg").string(),
                     "Consensus accuracy by ensemble size", "models (1..4)",
                     {{"mean accuracy", sweep.mean_accuracy}});
  }
}

void write_detection_suite(const DetectionSuite& suite, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  auto out = open_out(dir / "detection_suite.csv");
  out << "detector,delta_scale,attackers,seed,tp,fp,fn,tn,precision,recall,f1,false_positive_rate\n";
  auto row = [&](const DetectionCell& c) {
    out << c.detector << ',' << num(c.delta_scale) << ',' << c.attackers << ','
        << (c.seed ? std::to_string(*c.seed) : std::string("mean")) << ',' << c.tp << ',' << c.fp << ','
        << c.fn << ',' << c.tn << ',' << (c.precision ? num(*c.precision) : "n/a") << ','
        << (c.recall ? num(*c.recall) : "n/a") << ',' << num(c.f1) << ',' << num(c.false_positive_rate)
        << '\n';
  };
  for (const auto& c : suite.rows) row(c);
  for (const auto& c : suite.cells) row(c);

  // Wall-clock figures live apart from the deterministic table.
  auto lat = open_out(dir / "detection_latency.csv");
  lat << "detector,delta_scale,attackers,seed,latency_ms\n";
  for (const auto* set : {&suite.rows, &suite.cells}) {
    for (const auto& c : *set) {
      lat << c.detector << ',' << num(c.delta_scale) << ',' << c.attackers << ','
          << (c.seed ? std::to_string(*c.seed) : std::string("mean")) << ',' << num(c.latency_ms) << '\n';
    }
  }
  ordered_json summary;
  ordered_json cells = ordered_json::array();
  for (const auto& c : suite.cells) {
    cells.push_back({{"detector", c.detector},
                     {"delta_scale", c.delta_scale},
                     {"attackers", c.attackers},
                     {"precision", opt_json(c.precision)},
                     {"recall", opt_json(c.recall)},
                     {"f1", c.f1},
                     {"false_positive_rate", c.false_positive_rate}});
  }
  summary["cells"] = cells;
  summary["checks_passed"] = detection_operating_point_holds(suite);
  write_json(dir / "detection_summary.json", summary);

  auto dev = open_out(dir / "detection_latency_by_devices.csv");
  dev << "devices,latency_ms\n";
  for (const auto& [m, ms] : suite.latency_by_devices) dev << m << ',' << num(ms) << '\n';
}

std::string render_report(const std::string& out_dir, bool* checks_passed) {
  const fs::path dir(out_dir);
  std::ostringstream out;
  bool ok = true;
  bool found = false;
  auto load = [](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw InputError(p.string() + ": " + e.what());
    }
  };
  auto fmt = [](const json& v) -> std::string {
    if (v.is_null()) return "n/a";
    if (v.is_number_float()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
      return buf;
    }
    return v.dump();
  };
  if (fs::exists(dir / "summary.json")) {
    found = true;
    const auto s = load(dir / "summary.json");
    out << "run: seed " << s.at("seed") << ", " << s.at("rounds") << " rounds, scope "
        << s.at("scope").get<std::string>() << '\n';
    out << "  final accuracy       " << fmt(s.at("final_accuracy")) << '\n';
    out << "  final consensus acc  " << fmt(s.at("final_consensus_accuracy")) << '\n';
    out << "  final V(t)           " << fmt(s.at("final_lyapunov")) << " ("
        << s.at("convergence").get<std::string>() << ")\n";
    out << "  lemma pass rate      " << fmt(s.at("lemma_pass_rate")) << '\n';
    out << "  theorem pass rate    " << fmt(s.at("theorem_pass_rate")) << '\n';
    if (!s.at("privacy").is_null()) {
      const auto& p = s.at("privacy");
      out << "  probe acc layered    " << fmt(p.at("layered_probe_accuracy")) << '\n';
      out << "  probe acc full       " << fmt(p.at("full_probe_accuracy")) << '\n';
    }
    if (!s.at("security").is_null()) out << "  Sec                  " << fmt(s.at("security").at("sec")) << '\n';
    for (const auto& d : s.at("detection")) {
      out << "  " << d.at("detector").get<std::string>() << ": precision " << fmt(d.at("precision"))
          << ", recall " << fmt(d.at("recall")) << ", fpr " << fmt(d.at("false_positive_rate")) << '\n';
    }
    for (const auto& c : s.at("checks")) {
      out << "  check " << c.at("name").get<std::string>() << ": " << (c.at("pass").get<bool>() ? "PASS" : "FAIL")
          << " (" << fmt(c.at("value")) << " vs " << fmt(c.at("required")) << ")\n";
    }
    ok = ok && s.at("checks_passed").get<bool>();
  }
  if (fs::exists(dir / "collab_summary.json")) {
    found = true;
    const auto s = load(dir / "collab_summary.json");
    out << "collaboration sweep:\n";
    const auto& counts = s.at("counts");
    const auto& acc = s.at("mean_accuracy");
    for (std::size_t k = 0; k < counts.size(); ++k) {
      out << "  " << counts[k] << " model(s): " << fmt(acc[k]) << '\n';
    }
    const bool trend = s.at("trend_holds").get<bool>();
    out << "  trend " << (trend ? "PASS" : "FAIL") << '\n';
    ok = ok && trend;
  }
  if (fs::exists(dir / "detection_summary.json")) {
    found = true;
    const auto s = load(dir / "detection_summary.json");
    out << "detection suite:\n";
    for (const auto& c : s.at("cells")) {
      out << "  " << c.at("detector").get<std::string>() << " delta " << fmt(c.at("delta_scale")) << " attackers "
          << c.at("attackers") << ": precision " << fmt(c.at("precision")) << ", recall " << fmt(c.at("recall"))
          << ", f1 " << fmt(c.at("f1")) << '\n';
    }
    const bool pass = s.at("checks_passed").get<bool>();
    out << "  operating point " << (pass ? "PASS" : "FAIL") << '\n';
    ok = ok && pass;
  }
  if (!found) throw IoError("no summary files in " + out_dir);
  if (checks_passed) *checks_passed = ok;
  return out.str();
}

}  // namespace flt
