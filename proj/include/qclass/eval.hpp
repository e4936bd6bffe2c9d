#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qclass/config.hpp"
#include "qclass/corpus.hpp"
#include "qclass/metrics.hpp"
#include "qclass/pipeline.hpp"
#include "qclass/random.hpp"

namespace qclass {

/// Per-fold metrics of every evaluation scope.
struct FoldOutcome {
  std::size_t fold = 0;
  std::size_t train_size = 0;       // real training questions (before SMOTE)
  std::size_t early_stop_size = 0;  // held out of train_size for CNN early stopping
  std::size_t synthetic_count = 0;  // SMOTE samples added to the CNN training set
  std::vector<std::size_t> validation_indices;  // corpus indices
  std::vector<std::size_t> coarse_gold;
  std::vector<std::size_t> coarse_predicted;
  MetricsReport coarse;
  std::vector<std::optional<MetricsReport>> finer_gold;    // per coarse class, gold routing
  std::vector<std::optional<MetricsReport>> finer_routed;  // per coarse class, predicted routing
  MetricsReport end_to_end;                                // over all finer classes
};

/// Fold-averaged metrics. Per-class entries average over the folds in which
/// the class occurred (in gold or predictions).
struct MetricSummary {
  Averages macro;
  Averages micro;
  Averages weighted;
  double accuracy = 0;
  std::vector<Averages> per_class;
  std::vector<std::size_t> per_class_folds;
  std::size_t folds = 0;
  bool zero_division = false;
};

struct CrossValidationResult {
  std::size_t k = 0;
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  MetricSummary coarse;
  std::vector<std::optional<MetricSummary>> finer_gold;
  std::vector<std::optional<MetricSummary>> finer_routed;
  Averages finer_gold_average;    // unweighted mean of the per-model macro scores
  Averages finer_routed_average;
  MetricSummary end_to_end;
};

inline MetricSummary summarize(const std::vector<const MetricsReport*>& reports) {
  MetricSummary s;
  if (reports.empty()) return s;
  const std::size_t n = reports.front()->per_class.size();
  s.per_class.assign(n, Averages{});
  s.per_class_folds.assign(n, 0);
  auto add = [](Averages& into, const Averages& a) {
    into.precision += a.precision;
    into.recall += a.recall;
    into.f1 += a.f1;
  };
  for (const auto* r : reports) {
    add(s.macro, r->macro);
    add(s.micro, r->micro);
    add(s.weighted, r->weighted);
    s.accuracy += r->accuracy;
    s.zero_division |= r->zero_division;
    for (std::size_t c = 0; c < n; ++c) {
      const auto& pc = r->per_class[c];
      if (pc.support + pc.predicted == 0) continue;
      add(s.per_class[c], Averages{pc.precision, pc.recall, pc.f1});
      ++s.per_class_folds[c];
    }
  }
  const double k = static_cast<double>(reports.size());
  for (auto* a : {&s.macro, &s.micro, &s.weighted}) {
    a->precision /= k;
    a->recall /= k;
    a->f1 /= k;
  }
  s.accuracy /= k;
  for (std::size_t c = 0; c < n; ++c) {
    if (s.per_class_folds[c] == 0) continue;
    const double f = static_cast<double>(s.per_class_folds[c]);
    s.per_class[c].precision /= f;
    s.per_class[c].recall /= f;
    s.per_class[c].f1 /= f;
  }
  s.folds = reports.size();
  return s;
}

inline std::size_t local_index(const std::vector<FinerId>& members, FinerId f) {
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i] == f) return i;
  }
  return members.size();
}

/// Scores one trained pipeline on held-out questions (tokens filled in).
inline FoldOutcome evaluate_fold(const PipelineModel& model, const std::vector<QuestionSample>& validation) {
  const auto& tax = model.taxonomy;
  const std::size_t coarse_n = tax.coarse_count();
  FoldOutcome out;
  ConfusionMatrix coarse_cm(coarse_n);
  ConfusionMatrix e2e_cm(tax.finer_count());
  std::vector<std::vector<FinerId>> members(coarse_n);
  std::vector<ConfusionMatrix> gold_cm;
  std::vector<ConfusionMatrix> routed_cm;
  std::vector<std::size_t> seen(coarse_n, 0);
  for (std::size_t c = 0; c < coarse_n; ++c) {
    members[c] = tax.finer_of(CoarseId{static_cast<std::uint32_t>(c)});
    gold_cm.emplace_back(members[c].size());
    routed_cm.emplace_back(members[c].size() + 1);  // last column: routed to another coarse class
  }
  for (const auto& s : validation) {
    const auto routed = classify_tokens(model, s.tokens);
    out.coarse_gold.push_back(s.coarse.value);
    out.coarse_predicted.push_back(routed.coarse.value);
    coarse_cm.add(s.coarse.value, routed.coarse.value);
    if (!s.finer) continue;
    const auto c = s.coarse.value;
    ++seen[c];
    e2e_cm.add(s.finer->value, routed.finer.value);
    const auto gold_local = local_index(members[c], *s.finer);
    const auto gold_pred = classify_finer(model, s.coarse, s.tokens);
    gold_cm[c].add(gold_local, local_index(members[c], gold_pred.label));
    routed_cm[c].add(gold_local, routed.coarse == s.coarse ? local_index(members[c], routed.finer) : members[c].size());
  }
  out.coarse = precision_recall_f1(coarse_cm);
  out.end_to_end = precision_recall_f1(e2e_cm);
  out.finer_gold.resize(coarse_n);
  out.finer_routed.resize(coarse_n);
  for (std::size_t c = 0; c < coarse_n; ++c) {
    if (seen[c] == 0) continue;
    out.finer_gold[c] = precision_recall_f1(gold_cm[c]);
    out.finer_routed[c] = precision_recall_f1(routed_cm[c], members[c].size());
  }
  return out;
}

/// Seeds of the named substreams a cross-validation run draws from.
struct CvSeeds {
  std::uint64_t base;

  [[nodiscard]] std::uint64_t folds() const { return Rng(base).substream("folds").next(); }
  [[nodiscard]] std::uint64_t early_stop_split(std::size_t fold) const {
    return Rng(base).substream("early_stop").substream(fold).next();
  }
  [[nodiscard]] std::uint64_t training(std::size_t fold) const {
    return Rng(base).substream("train").substream(fold).next();
  }
};

using ProgressFn = std::function<void(const std::string&)>;

/// Stratified k-fold cross-validation of the full two-stage pipeline. Each
/// fold fits every component (vocabulary, embeddings, SMOTE, CNN, TF-IDF,
/// SGD) on the other k - 1 folds only.
inline CrossValidationResult cross_validate(const Taxonomy& taxonomy, const std::vector<QuestionSample>& corpus_in,
                                            const PipelineConfig& cfg, std::size_t k, std::uint64_t seed,
                                            const ProgressFn& progress = {}) {
  const auto corpus = with_tokens(corpus_in);
  const CvSeeds seeds{seed};
  CrossValidationResult result;
  result.k = k;
  result.plan = stratified_kfold(corpus, k, seeds.folds());

  for (std::size_t f = 0; f < k; ++f) {
    std::vector<QuestionSample> train;
    std::vector<QuestionSample> validation;
    const auto val_idx = result.plan.validation_indices(f);
    for (auto i : result.plan.training_indices(f)) train.push_back(corpus[i]);
    for (auto i : val_idx) validation.push_back(corpus[i]);

    auto [fit, early_stop] = split_validation(train, cfg.validation_fraction, seeds.early_stop_split(f));
    PipelineTrace trace;
    const auto model = run_stage("fold " + std::to_string(f), [&] {
      return train_pipeline(taxonomy, fit, early_stop, cfg, seeds.training(f), &trace);
    });
    auto outcome = evaluate_fold(model, validation);
    outcome.fold = f;
    outcome.train_size = train.size();
    outcome.early_stop_size = early_stop.size();
    outcome.synthetic_count = trace.synthetic_samples;
    outcome.validation_indices = val_idx;
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "fold %zu/%zu: coarse macro F1 %.4f, cnn epochs %zu (best %zu), synthetic %zu", f + 1,
                    k, outcome.coarse.macro.f1, trace.cnn.train_loss.size(), trace.cnn.best_epoch + 1,
                    trace.synthetic_samples);
      progress(buf);
    }
    result.folds.push_back(std::move(outcome));
  }

  std::vector<const MetricsReport*> coarse;
  std::vector<const MetricsReport*> e2e;
  for (const auto& f : result.folds) {
    coarse.push_back(&f.coarse);
    e2e.push_back(&f.end_to_end);
  }
  result.coarse = summarize(coarse);
  result.end_to_end = summarize(e2e);

  const std::size_t coarse_n = taxonomy.coarse_count();
  result.finer_gold.resize(coarse_n);
  result.finer_routed.resize(coarse_n);
  std::size_t models = 0;
  for (std::size_t c = 0; c < coarse_n; ++c) {
    std::vector<const MetricsReport*> gold;
    std::vector<const MetricsReport*> routed;
    for (const auto& f : result.folds) {
      if (f.finer_gold[c]) gold.push_back(&*f.finer_gold[c]);
      if (f.finer_routed[c]) routed.push_back(&*f.finer_routed[c]);
    }
    if (gold.empty()) continue;
    result.finer_gold[c] = summarize(gold);
    result.finer_routed[c] = summarize(routed);
    ++models;
    for (auto [avg, summary] : {std::pair{&result.finer_gold_average, &*result.finer_gold[c]},
                                std::pair{&result.finer_routed_average, &*result.finer_routed[c]}}) {
      avg->precision += summary->macro.precision;
      avg->recall += summary->macro.recall;
      avg->f1 += summary->macro.f1;
    }
  }
  if (models > 0) {
    for (auto* a : {&result.finer_gold_average, &result.finer_routed_average}) {
      a->precision /= static_cast<double>(models);
      a->recall /= static_cast<double>(models);
      a->f1 /= static_cast<double>(models);
    }
  }
  return result;
}

/// Published results on the original 3333-question Bengali corpus, for side
/// by side comparison when that corpus is supplied.
struct ReferenceScores {
  static constexpr Averages coarse{0.9310, 0.9344, 0.9325};
  static constexpr Averages finer_average{0.8792, 0.8847, 0.8723};

  struct Model {
    const char* coarse;
    Averages scores;
  };
  static constexpr Model finer_models[] = {
      {"ENTITY", {0.9198, 0.9404, 0.9297}},   {"NUMERIC", {0.7693, 0.7586, 0.7404}},
      {"HUMAN", {0.8033, 0.8371, 0.8091}},    {"LOCATION", {0.9035, 0.9035, 0.8964}},
      {"DESCRIPTION", {0.9513, 0.9641, 0.9565}}, {"ABBREVIATION", {0.9282, 0.9048, 0.9018}},
  };
};

namespace detail {

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_averages(std::ostream& out, const std::string& scope, const std::string& cls, const Averages& a) {
  out << scope << '\t' << cls << "\tprecision\t" << fixed6(a.precision) << '\n';
  out << scope << '\t' << cls << "\trecall\t" << fixed6(a.recall) << '\n';
  out << scope << '\t' << cls << "\tf1\t" << fixed6(a.f1) << '\n';
}

inline void write_summary(std::ostream& out, const std::string& scope, const MetricSummary& s,
                          const std::vector<std::string>& class_names) {
  write_averages(out, scope, "macro", s.macro);
  write_averages(out, scope, "micro", s.micro);
  write_averages(out, scope, "weighted", s.weighted);
  out << scope << "\tall\taccuracy\t" << fixed6(s.accuracy) << '\n';
  out << scope << "\tall\tzero_division\t" << (s.zero_division ? 1 : 0) << '\n';
  for (std::size_t c = 0; c < s.per_class.size() && c < class_names.size(); ++c) {
    if (s.per_class_folds[c] == 0) continue;
    write_averages(out, scope, class_names[c], s.per_class[c]);
  }
}

inline std::vector<std::string> finer_names(const Taxonomy& tax, CoarseId c) {
  std::vector<std::string> out;
  for (auto f : tax.finer_of(c)) out.push_back(tax.finer_name(f));
  return out;
}

inline std::vector<std::string> qualified_finer_names(const Taxonomy& tax) {
  std::vector<std::string> out;
  for (std::size_t f = 0; f < tax.finer_count(); ++f) {
    const FinerId id{static_cast<std::uint32_t>(f)};
    out.push_back(tax.coarse_name(tax.parent(id)) + "/" + tax.finer_name(id));
  }
  return out;
}

}  // namespace detail

/// Machine-readable report: one `scope<TAB>class<TAB>metric<TAB>value` line
/// per metric, in a fixed order.
inline void write_report_tsv(std::ostream& out, const CrossValidationResult& r, const Taxonomy& tax) {
  using detail::fixed6;
  out << "scope\tclass\tmetric\tvalue\n";
  out << "run\tall\tfolds\t" << r.k << '\n';
  detail::write_summary(out, "coarse", r.coarse, tax.coarse_names());
  for (std::size_t c = 0; c < tax.coarse_count(); ++c) {
    if (!r.finer_gold[c]) continue;
    const CoarseId id{static_cast<std::uint32_t>(c)};
    detail::write_summary(out, "finer_gold/" + tax.coarse_name(id), *r.finer_gold[c], detail::finer_names(tax, id));
  }
  detail::write_averages(out, "finer_gold", "average", r.finer_gold_average);
  for (std::size_t c = 0; c < tax.coarse_count(); ++c) {
    if (!r.finer_routed[c]) continue;
    const CoarseId id{static_cast<std::uint32_t>(c)};
    detail::write_summary(out, "finer_routed/" + tax.coarse_name(id), *r.finer_routed[c], detail::finer_names(tax, id));
  }
  detail::write_averages(out, "finer_routed", "average", r.finer_routed_average);
  detail::write_summary(out, "end_to_end", r.end_to_end, detail::qualified_finer_names(tax));

  for (const auto& f : r.folds) {
    const auto scope = "fold" + std::to_string(f.fold);
    out << scope << "\tall\ttrain_size\t" << f.train_size << '\n';
    out << scope << "\tall\tvalidation_size\t" << f.validation_indices.size() << '\n';
    out << scope << "\tall\tsynthetic_train\t" << f.synthetic_count << '\n';
    detail::write_averages(out, scope + "/coarse", "macro", f.coarse.macro);
    out << scope << "/coarse\tall\taccuracy\t" << fixed6(f.coarse.accuracy) << '\n';
    for (std::size_t c = 0; c < tax.coarse_count(); ++c) {
      if (!f.finer_gold[c]) continue;
      detail::write_averages(out, scope + "/finer_gold/" + tax.coarse_names()[c], "macro", f.finer_gold[c]->macro);
    }
    detail::write_averages(out, scope + "/end_to_end", "macro", f.end_to_end.macro);
  }

  detail::write_averages(out, "reference", "coarse", ReferenceScores::coarse);
  detail::write_averages(out, "reference", "finer_gold/average", ReferenceScores::finer_average);
  for (const auto& m : ReferenceScores::finer_models) {
    if (tax.find_coarse(m.coarse)) detail::write_averages(out, "reference", std::string("finer_gold/") + m.coarse, m.scores);
  }
}

/// Human-readable summary table, with published reference scores alongside.
inline void print_report_table(std::ostream& out, const CrossValidationResult& r, const Taxonomy& tax) {
  using detail::fixed6;
  auto row = [&](const std::string& name, const Averages& a, const std::string& extra = "") {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-28s %9.4f %9.4f %9.4f", name.c_str(), a.precision, a.recall, a.f1);
    out << buf << extra << '\n';
  };
  auto ref = [](const Averages& a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "   (reference F1 %.4f)", a.f1);
    return std::string(buf);
  };
  out << r.k << "-fold cross-validation (macro averages over folds)\n";
  out << "  scope                        precision    recall        f1\n";
  out << "Stage one (coarse classes)\n";
  row("coarse", r.coarse.macro, ref(ReferenceScores::coarse));
  out << "  accuracy " << fixed6(r.coarse.accuracy) << '\n';
  for (std::size_t c = 0; c < tax.coarse_count(); ++c) {
    if (r.coarse.per_class_folds[c] > 0) row("  " + tax.coarse_names()[c], r.coarse.per_class[c]);
  }
  out << "Stage two, gold routing (one model per coarse class)\n";
  for (std::size_t c = 0; c < tax.coarse_count(); ++c) {
    if (!r.finer_gold[c]) continue;
    std::string extra;
    for (const auto& m : ReferenceScores::finer_models) {
      if (tax.coarse_names()[c] == m.coarse) extra = ref(m.scores);
    }
    row(tax.coarse_names()[c], r.finer_gold[c]->macro, extra);
  }
  row("average", r.finer_gold_average, ref(ReferenceScores::finer_average));
  out << "Stage two, predicted routing\n";
  for (std::size_t c = 0; c < tax.coarse_count(); ++c) {
    if (r.finer_routed[c]) row(tax.coarse_names()[c], r.finer_routed[c]->macro);
  }
  row("average", r.finer_routed_average);
  out << "End to end (all finer classes)\n";
  row("end_to_end", r.end_to_end.macro);
  out << "  accuracy " << fixed6(r.end_to_end.accuracy) << '\n';
  if (r.coarse.zero_division || r.end_to_end.zero_division) {
    out << "note: some precision/recall values were 0/0 and are reported as 0\n";
  }
}

}  // namespace qclass
