#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qclass/cnn.hpp"
#include "qclass/embedding.hpp"
#include "qclass/error.hpp"
#include "qclass/random.hpp"
#include "qclass/sgd_linear.hpp"

namespace qclass {

struct PreprocessConfig {
  std::size_t min_count = 15;
  std::size_t max_len = 21;
};

struct SmoteSettings {
  bool enabled = true;
  std::size_t k = 5;
};

/// Every knob that influences a trained model.
struct PipelineConfig {
  PreprocessConfig preprocess;
  EmbeddingConfig embedding;
  SmoteSettings smote;
  cnn::ArchitectureConfig architecture;
  cnn::TrainConfig training;
  // Share of the training split held out (stratified) for early stopping.
  double validation_fraction = 0.1;
  SgdConfig sgd;
};

struct RunConfig {
  std::string corpus;
  std::string taxonomy;  // empty: the built-in six-class taxonomy
  std::optional<std::uint64_t> seed;
  std::size_t folds = 10;
  PipelineConfig pipeline;
  std::string report_path = "report.tsv";
  std::string model_path = "model.qcb";
  std::string log_path;  // timings and per-epoch losses; empty disables
};

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_real(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = std::string(trim(item));
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(std::stod(t, &used));
      } else {
        if (t.front() == '-') throw std::invalid_argument("negative");
        out.push_back(static_cast<T>(std::stoull(t, &used)));
      }
      if (used != t.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError("config: bad list value '" + text + "' for " + key);
    }
  }
  return out;
}

class ConfigReader {
 public:
  explicit ConfigReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <typename T>
  void read(const std::string& key, T& target) {
    seen_.insert(key);
    const auto raw = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!raw) return;
    const auto text = std::string(trim(*raw));
    try {
      std::size_t used = text.size();
      if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "yes" || text == "on") {
          target = true;
        } else if (text == "false" || text == "0" || text == "no" || text == "off") {
          target = false;
        } else {
          throw std::invalid_argument("bool");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        target = text;
      } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
        if (text.empty() || text.front() == '-') throw std::invalid_argument("seed");
        target = std::stoull(text, &used);
      } else if constexpr (std::is_floating_point_v<T>) {
        target = std::stod(text, &used);
      } else if constexpr (std::is_same_v<T, LinearLoss>) {
        if (text == "modified_huber") {
          target = LinearLoss::modified_huber;
        } else if (text == "huber") {
          target = LinearLoss::huber;
        } else {
          throw std::invalid_argument("loss");
        }
      } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        target = parse_list<double>(key, text);
      } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
        target = parse_list<std::size_t>(key, text);
      } else {
        if (text.empty() || text.front() == '-') throw std::invalid_argument("unsigned");
        target = static_cast<T>(std::stoull(text, &used));
      }
      if (used != text.size()) throw std::invalid_argument("trailing characters");
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError("config: bad value '" + text + "' for " + key);
    }
  }

  void reject_unknown() const {
    for (const auto& [section, entries] : tree_) {
      if (entries.empty() && !entries.data().empty()) {
        throw UsageError("config: key '" + section + "' must live in a [section]");
      }
      for (const auto& [key, value] : entries) {
        if (!seen_.count(section + "." + key)) throw UsageError("config: unknown key " + section + "." + key);
      }
    }
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> seen_;
};

template <typename Visitor>
void visit_pipeline_keys(PipelineConfig& c, Visitor&& v) {
  v("preprocess.min_count", c.preprocess.min_count);
  v("preprocess.max_len", c.preprocess.max_len);
  v("embedding.dim", c.embedding.dim);
  v("embedding.window", c.embedding.window);
  v("embedding.negatives", c.embedding.negatives);
  v("embedding.epochs", c.embedding.epochs);
  v("embedding.learning_rate", c.embedding.learning_rate);
  v("smote.enabled", c.smote.enabled);
  v("smote.k", c.smote.k);
  v("cnn.conv_filters", c.architecture.conv_filters);
  v("cnn.conv_widths", c.architecture.conv_widths);
  v("cnn.conv_dropout", c.architecture.conv_dropout);
  v("cnn.dense_units", c.architecture.dense_units);
  v("cnn.dense_dropout", c.architecture.dense_dropout);
  v("cnn.learning_rate", c.training.adam.learning_rate);
  v("cnn.beta1", c.training.adam.beta1);
  v("cnn.beta2", c.training.adam.beta2);
  v("cnn.epsilon", c.training.adam.epsilon);
  v("cnn.batch_size", c.training.batch_size);
  v("cnn.max_epochs", c.training.max_epochs);
  v("cnn.patience", c.training.patience);
  v("cnn.validation_fraction", c.validation_fraction);
  v("sgd.loss", c.sgd.loss);
  v("sgd.alpha", c.sgd.alpha);
  v("sgd.delta", c.sgd.delta);
  v("sgd.epochs", c.sgd.epochs);
  v("sgd.eta0_grid", c.sgd.eta0_grid);
  v("sgd.tol", c.sgd.tol);
  v("sgd.n_iter_no_change", c.sgd.n_iter_no_change);
}

template <typename T>
std::string to_text(const T& value) {
  if constexpr (std::is_same_v<T, bool>) {
    return value ? "true" : "false";
  } else if constexpr (std::is_same_v<T, LinearLoss>) {
    return value == LinearLoss::modified_huber ? "modified_huber" : "huber";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_real(value);
  } else if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::size_t>>) {
    return join(value);
  } else {
    return std::to_string(value);
  }
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("config: ") + what);
  };
  require(c.preprocess.min_count >= 1, "preprocess.min_count must be at least 1");
  require(c.preprocess.max_len >= 1, "preprocess.max_len must be at least 1");
  require(c.embedding.dim >= 1 && c.embedding.window >= 1, "embedding.dim and embedding.window must be positive");
  require(c.embedding.epochs >= 1 && c.embedding.learning_rate > 0, "embedding.epochs/learning_rate must be positive");
  require(c.smote.k >= 1, "smote.k must be at least 1");
  require(c.architecture.conv_filters.size() == c.architecture.conv_widths.size(),
          "cnn.conv_filters and cnn.conv_widths must have the same length");
  require(c.architecture.conv_dropout >= 0 && c.architecture.conv_dropout < 1, "cnn.conv_dropout must be in [0,1)");
  require(c.architecture.dense_dropout >= 0 && c.architecture.dense_dropout < 1, "cnn.dense_dropout must be in [0,1)");
  require(c.training.adam.learning_rate > 0, "cnn.learning_rate must be positive");
  require(c.training.adam.beta1 > 0 && c.training.adam.beta1 < 1, "cnn.beta1 must be in (0,1)");
  require(c.training.adam.beta2 > 0 && c.training.adam.beta2 < 1, "cnn.beta2 must be in (0,1)");
  require(c.training.adam.epsilon > 0, "cnn.epsilon must be positive");
  require(c.training.batch_size >= 1, "cnn.batch_size must be at least 1");
  require(c.training.max_epochs >= 1, "cnn.max_epochs must be at least 1");
  require(c.validation_fraction >= 0 && c.validation_fraction < 1, "cnn.validation_fraction must be in [0,1)");
  require(c.sgd.alpha >= 0, "sgd.alpha must be non-negative");
  require(c.sgd.delta > 0, "sgd.delta must be positive");
  require(c.sgd.epochs >= 1, "sgd.epochs must be at least 1");
  require(!c.sgd.eta0_grid.empty(), "sgd.eta0_grid must not be empty");
  for (double e : c.sgd.eta0_grid) require(e > 0, "sgd.eta0_grid entries must be positive");
}

/// Canonical `section.key=value` listing of every pipeline setting, in a
/// fixed order. Used for fingerprints and for echoing a resolved config.
inline std::string canonical_text(const PipelineConfig& config) {
  PipelineConfig c = config;
  std::string out;
  detail::visit_pipeline_keys(c, [&](const std::string& key, const auto& value) {
    out += key + "=" + detail::to_text(value) + "\n";
  });
  return out;
}

inline std::uint64_t config_fingerprint(const PipelineConfig& config, std::uint64_t seed) {
  return fnv1a64(canonical_text(config) + "seed=" + std::to_string(seed) + "\n");
}

/// Reads an INI config. `overrides` are `section.key=value` strings applied
/// on top of the file. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(std::istream& in, const std::vector<std::string>& overrides = {},
                              const std::filesystem::path& base_dir = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || o.find('.') > eq) {
      throw UsageError("config override '" + o + "' is not of the form section.key=value");
    }
    tree.put(boost::property_tree::ptree::path_type(o.substr(0, eq), '.'), o.substr(eq + 1));
  }

  RunConfig rc;
  detail::ConfigReader reader(tree);
  reader.read("run.seed", rc.seed);
  reader.read("run.folds", rc.folds);
  reader.read("run.corpus", rc.corpus);
  reader.read("run.taxonomy", rc.taxonomy);
  reader.read("output.report", rc.report_path);
  reader.read("output.model", rc.model_path);
  reader.read("output.log", rc.log_path);
  detail::visit_pipeline_keys(rc.pipeline, [&](const std::string& key, auto& value) { reader.read(key, value); });
  reader.reject_unknown();
  validate(rc.pipeline);
  if (rc.folds < 2) throw UsageError("config: run.folds must be at least 2");

  auto resolve = [&](std::string& p) {
    if (!p.empty() && !base_dir.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).string();
  };
  resolve(rc.corpus);
  resolve(rc.taxonomy);
  return rc;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  return parse_config(in, overrides, std::filesystem::path(path).parent_path());
}

}  // namespace qclass
