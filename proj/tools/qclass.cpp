// qclass: command-line front end for the two-stage question classifier.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qclass/qclass.hpp"

namespace {

using namespace qclass;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

/// Timestamped diagnostics go to the log file only, never into reports.
class RunLog {
 public:
  explicit RunLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::app);
    if (!out_) throw UsageError("cannot open log file '" + path + "'");
  }

  void line(const std::string& message) {
    std::cerr << message << '\n';
    if (!out_.is_open()) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\t' << message << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct ConfigOptions {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string corpus;
  std::string taxonomy;
};

void add_config_options(CLI::App* cmd, ConfigOptions& o) {
  cmd->add_option("-c,--config", o.path, "INI configuration file");
  cmd->add_option("--set", o.overrides, "Override a setting: section.key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "Random seed (overrides run.seed)");
  cmd->add_option("--corpus", o.corpus, "Corpus file (overrides run.corpus)");
  cmd->add_option("--taxonomy", o.taxonomy, "Taxonomy file (overrides run.taxonomy)");
}

RunConfig resolve_config(const ConfigOptions& o) {
  RunConfig rc;
  if (o.path.empty()) {
    std::istringstream empty;
    rc = parse_config(empty, o.overrides);
  } else {
    rc = load_config(o.path, o.overrides);
  }
  if (o.seed) rc.seed = o.seed;
  if (!o.corpus.empty()) rc.corpus = o.corpus;
  if (!o.taxonomy.empty()) rc.taxonomy = o.taxonomy;
  if (!rc.seed) throw UsageError("a seed is required: set run.seed in the config or pass --seed");
  if (rc.corpus.empty()) throw UsageError("no corpus given: set run.corpus in the config or pass --corpus");
  return rc;
}

Taxonomy load_taxonomy(const RunConfig& rc) {
  return rc.taxonomy.empty() ? Taxonomy::reference() : Taxonomy::load(rc.taxonomy);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path + "'");
  return out;
}

int cmd_prepare(const ConfigOptions& opts, const std::string& vocab_out) {
  const auto rc = resolve_config(opts);
  const auto taxonomy = load_taxonomy(rc);
  auto samples = load_corpus(rc.corpus, taxonomy);
  prepare_tokens(samples);

  std::vector<std::vector<std::string>> token_lists;
  std::size_t truncated = 0;
  std::size_t longest = 0;
  for (const auto& s : samples) {
    token_lists.push_back(s.tokens);
    truncated += s.tokens.size() > rc.pipeline.preprocess.max_len ? 1 : 0;
    longest = std::max(longest, s.tokens.size());
  }
  const auto vocab = build_vocabulary(token_lists, rc.pipeline.preprocess.min_count);
  std::size_t total = 0;
  for (std::size_t id = 0; id < vocab.size(); ++id) total += vocab.count(static_cast<TokenId>(id));

  std::cout << "corpus\t" << rc.corpus << "\nquestions\t" << samples.size() << '\n';
  const auto counts = class_counts(samples);
  std::map<FinerId, std::size_t> finer_counts;
  for (const auto& s : samples) {
    if (s.finer) ++finer_counts[*s.finer];
  }
  for (std::size_t c = 0; c < taxonomy.coarse_count(); ++c) {
    const CoarseId id{static_cast<std::uint32_t>(c)};
    const auto it = counts.find(id);
    std::cout << "coarse\t" << taxonomy.coarse_name(id) << '\t' << (it == counts.end() ? 0 : it->second) << '\n';
    for (auto f : taxonomy.finer_of(id)) {
      const auto fit = finer_counts.find(f);
      std::cout << "finer\t" << taxonomy.coarse_name(id) << '/' << taxonomy.finer_name(f) << '\t'
                << (fit == finer_counts.end() ? 0 : fit->second) << '\n';
    }
  }
  std::cout << "vocabulary_size\t" << vocab.size() << "\nmin_count\t" << vocab.min_count() << '\n';
  for (TokenId id : {Vocabulary::unk, Vocabulary::num, Vocabulary::eng}) {
    std::cout << "tokens_" << vocab.token(id) << '\t' << vocab.count(id) << '\n';
  }
  std::cout << "tokens_total\t" << total << "\nlongest_question\t" << longest << "\ntruncated_questions\t" << truncated
            << '\n';
  if (!vocab_out.empty()) {
    auto out = open_output(vocab_out);
    vocab.save(out);
  }
  return kExitOk;
}

int cmd_train(const ConfigOptions& opts, const std::string& model_out) {
  const auto rc = resolve_config(opts);
  RunLog log(rc.log_path);
  const auto taxonomy = load_taxonomy(rc);
  const auto samples = load_corpus(rc.corpus, taxonomy);
  const auto seed = *rc.seed;
  const auto [fit, early_stop] =
      split_validation(samples, rc.pipeline.validation_fraction, Rng(seed).substream("early_stop").next());
  log.line("train: " + std::to_string(fit.size()) + " questions, " + std::to_string(early_stop.size()) +
           " held out for early stopping");
  PipelineTrace trace;
  const auto model = train_pipeline(taxonomy, fit, early_stop, rc.pipeline, seed, &trace);
  for (std::size_t e = 0; e < trace.cnn.train_loss.size(); ++e) {
    std::ostringstream os;
    os << "cnn epoch " << e + 1 << " train_loss " << trace.cnn.train_loss[e];
    if (e < trace.cnn.val_loss.size()) os << " val_loss " << trace.cnn.val_loss[e];
    log.line(os.str());
  }
  const auto path = model_out.empty() ? rc.model_path : model_out;
  save_pipeline(model, path);
  log.line("model written to " + path);
  return kExitOk;
}

int cmd_evaluate(const ConfigOptions& opts, const std::string& report_out) {
  const auto rc = resolve_config(opts);
  RunLog log(rc.log_path);
  const auto taxonomy = load_taxonomy(rc);
  const auto samples = load_corpus(rc.corpus, taxonomy);
  log.line("evaluate: " + std::to_string(samples.size()) + " questions, " + std::to_string(rc.folds) + " folds");
  const auto start = std::chrono::steady_clock::now();
  const auto result =
      cross_validate(taxonomy, samples, rc.pipeline, rc.folds, *rc.seed, [&](const std::string& m) { log.line(m); });
  const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  print_report_table(std::cout, result, taxonomy);
  const auto path = report_out.empty() ? rc.report_path : report_out;
  auto out = open_output(path);
  write_report_tsv(out, result, taxonomy);
  out.close();
  if (!out) throw UsageError("failed writing '" + path + "'");
  std::ostringstream os;
  os << "report written to " << path << " (" << std::fixed << std::setprecision(1) << seconds << " s)";
  log.line(os.str());
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& input_path) {
  const auto model = load_pipeline(model_path);
  std::ifstream file;
  if (!input_path.empty()) {
    file.open(input_path, std::ios::binary);
    if (!file) throw DataError("cannot open input file '" + input_path + "'");
  }
  std::istream& in = input_path.empty() ? std::cin : file;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (!detail::is_valid_utf8(line)) throw DataError("input is not valid UTF-8: '" + line + "'");
    const auto r = classify(model, line);
    char prob[32];
    std::snprintf(prob, sizeof prob, "%.6f", r.coarse_probabilities[r.coarse.value]);
    std::cout << line << '\t' << model.taxonomy.coarse_name(r.coarse) << '\t' << model.taxonomy.finer_name(r.finer)
              << '\t' << prob << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  gradcheck::Options opt;
  opt.seed = seed;
  bool ok = true;
  for (const auto& r : gradcheck::run_all(opt)) {
    std::printf("%-28s %s  max_rel_error %.3e  checked %zu  skipped %zu\n", r.name.c_str(), r.passed ? "ok  " : "FAIL",
                r.max_relative_error, r.checked, r.skipped);
    ok &= r.passed;
  }
  return ok ? kExitOk : kExitNumeric;
}

int cmd_synth(const synthetic::GeneratorConfig& cfg, bool reference_shaped, std::uint64_t seed,
              const std::string& out_path, const std::string& taxonomy_path) {
  const auto corpus = reference_shaped ? synthetic::generate_reference_shaped(cfg, seed) : synthetic::generate(cfg, seed);
  auto out = open_output(out_path);
  save_corpus(out, corpus.samples, corpus.taxonomy);
  std::ostringstream generated, builtin;
  corpus.taxonomy.save(generated);
  Taxonomy::reference().save(builtin);
  // A corpus outside the built-in taxonomy is unreadable without its taxonomy file.
  const auto tax_path =
      taxonomy_path.empty() && generated.str() != builtin.str() ? out_path + ".taxonomy" : taxonomy_path;
  if (!tax_path.empty()) {
    auto tax = open_output(tax_path);
    tax << generated.str();
  }
  std::cerr << "wrote " << corpus.samples.size() << " questions to " << out_path << '\n';
  if (!tax_path.empty()) std::cerr << "wrote taxonomy to " << tax_path << " (pass it with --taxonomy)\n";
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Two-stage Bengali question classifier (coarse CNN, finer linear models)"};
  app.require_subcommand(1);

  ConfigOptions prepare_opts;
  std::string vocab_out;
  auto* prepare = app.add_subcommand("prepare", "Validate a corpus and report its vocabulary");
  add_config_options(prepare, prepare_opts);
  prepare->add_option("--vocab-out", vocab_out, "Write the vocabulary (token, id, count) to this file");

  ConfigOptions train_opts;
  std::string model_out;
  auto* train = app.add_subcommand("train", "Train both stages on the whole corpus and save a model bundle");
  add_config_options(train, train_opts);
  train->add_option("-o,--model", model_out, "Bundle path (overrides output.model)");

  ConfigOptions eval_opts;
  std::string report_out;
  auto* evaluate = app.add_subcommand("evaluate", "Stratified k-fold cross-validation with reports");
  add_config_options(evaluate, eval_opts);
  evaluate->add_option("-o,--report", report_out, "Report path (overrides output.report)");

  std::string model_path;
  std::string input_path;
  auto* predict = app.add_subcommand("predict", "Classify questions, one per line, from a file or stdin");
  predict->add_option("-m,--model", model_path, "Model bundle")->required();
  predict->add_option("input", input_path, "Question file (default: stdin)");

  std::uint64_t grad_seed = 1;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--seed", grad_seed, "Seed for the randomized shapes");

  synthetic::GeneratorConfig synth_cfg;
  bool reference_shaped = false;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  std::string synth_taxonomy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--seed", synth_seed, "Random seed")->required();
  synth->add_option("-o,--out", synth_out, "Corpus output file")->required();
  synth->add_option("--taxonomy-out", synth_taxonomy, "Also write the corpus taxonomy");
  synth->add_option("--samples", synth_cfg.samples, "Question count")->capture_default_str();
  synth->add_option("--coarse", synth_cfg.coarse_classes, "Coarse classes")->capture_default_str();
  synth->add_option("--finer", synth_cfg.finer_per_coarse, "Finer classes per coarse class")->capture_default_str();
  synth->add_option("--imbalance", synth_cfg.imbalance, "Largest / smallest coarse class")->capture_default_str();
  synth->add_option("--keywords", synth_cfg.coarse_keywords, "Keywords per coarse class")->capture_default_str();
  synth->add_option("--keyword-skew", synth_cfg.keyword_skew, "Zipf exponent of keyword frequencies")
      ->capture_default_str();
  synth->add_option("--marker-drop-rate", synth_cfg.marker_drop_rate, "Share of questions without a class marker")
      ->capture_default_str();
  synth->add_option("--distractor-rate", synth_cfg.distractor_rate, "Share of questions with a foreign keyword")
      ->capture_default_str();
  synth->add_flag("--shared-finer-words", synth_cfg.shared_finer_words,
                  "Reuse one finer word pool across coarse classes");
  synth->add_flag("--reference-shaped", reference_shaped, "Use the built-in taxonomy and its class counts");
  bool benchmark = false;
  auto* bench_flag = synth->add_flag("--benchmark", benchmark, "Generator settings of the end-to-end benchmark");
  for (const char* knob : {"--samples", "--coarse", "--finer", "--imbalance", "--keywords", "--keyword-skew",
                           "--marker-drop-rate", "--distractor-rate", "--shared-finer-words", "--reference-shaped"}) {
    bench_flag->excludes(synth->get_option(knob));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0 && e.get_name() != "CallForHelp") std::cerr << app.help();
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (prepare->parsed()) return cmd_prepare(prepare_opts, vocab_out);
  if (train->parsed()) return cmd_train(train_opts, model_out);
  if (evaluate->parsed()) return cmd_evaluate(eval_opts, report_out);
  if (predict->parsed()) return cmd_predict(model_path, input_path);
  if (grad->parsed()) return cmd_gradcheck(grad_seed);
  if (benchmark) synth_cfg = synthetic::benchmark_config();
  if (synth->parsed()) return cmd_synth(synth_cfg, reference_shaped, synth_seed, synth_out, synth_taxonomy);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
