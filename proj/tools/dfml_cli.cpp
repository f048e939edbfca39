/*
 * Copyright 2026 The dfml Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line driver for the dfml pipeline:
//   synth -> split -> train-cls / train-ae -> eval -> tsne / kmeans -> report

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfml/dfml.hpp"

namespace fs = std::filesystem;
using namespace dfml;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMissingInput = 2;
constexpr int kExitInfeasible = 3;

class MissingInput : public Error {
 public:
  explicit MissingInput(const fs::path& p) : Error("missing input: " + p.string()) {}
};

void require_input(const fs::path& p) {
  if (!fs::exists(p)) throw MissingInput(p);
}

void log(const std::string& line) { std::cerr << line << '\n'; }

std::string num(double v) { return format_number(v); }

struct Invocation {
  std::string config_path;
  std::string seed;
  std::string out;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> overrides;

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) c.merge_file(config_path);
    if (!seed.empty()) c.set("seed", seed, "--seed");
    if (!out.empty()) c.set("out", out, "--out");
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error("--set expects KEY=VALUE, got '" + s + "'");
      c.set(trim(s.substr(0, eq)), s.substr(eq + 1), "--set");
    }
    for (const auto& [key, value] : overrides) c.set(key, value, "--" + key);
    return c;
  }
};

// Registers --config/--seed/--out/--set plus one flag per relevant config
// key. Keys under a subcommand's own section also get a short alias, e.g.
// --cls.epochs and --epochs.
void add_options(CLI::App* cmd, Invocation& inv, const std::string& section,
                 const std::vector<std::string>& shared) {
  cmd->add_option("--config", inv.config_path, "key=value config file");
  cmd->add_option("--seed", inv.seed, "top-level seed");
  cmd->add_option("--out", inv.out, "output directory");
  cmd->add_option("--set", inv.sets, "override any config key as KEY=VALUE");
  for (const auto& k : kConfigKeys) {
    const std::string key(k.name);
    std::string names;
    if (!section.empty() && key.rfind(section, 0) == 0) {
      names = "--" + key + ",--" + key.substr(section.size());
    } else if (std::find(shared.begin(), shared.end(), key) != shared.end()) {
      names = "--" + key;
    } else {
      continue;
    }
    cmd->add_option_function<std::string>(
        names, [&inv, key](const std::string& v) { inv.overrides.emplace_back(key, v); },
        std::string(k.help));
  }
}

// Every stage ends by re-reading what it wrote.
void validate_csv(const fs::path& p, std::size_t min_rows = 0) {
  const auto t = read_csv(p);
  if (t.rows.size() < min_rows) throw Error(p.string() + ": expected at least " +
                                            std::to_string(min_rows) + " rows");
}

void write_resolved(const RunConfig& c, const std::string& stage) {
  write_text_file(c.path("out") / (stage + ".config"), c.resolved_text());
}

Manifest read_split(const RunConfig& c) {
  const auto p = c.path("split_manifest");
  require_input(p);
  return read_manifest(p);
}

void require_frames(const Manifest& m, Cohort cohort, const fs::path& root) {
  for (const auto& r : m.records)
    if (r.cohort == cohort) require_input(root / r.path);
}

template <typename Fn>
void for_cohort(const Manifest& m, Cohort cohort, Fn&& fn) {
  for (const auto& r : m.records)
    if (r.cohort == cohort) fn(r);
}

// ---------------------------------------------------------------------------

void run_synth(const RunConfig& c) {
  const auto [a, b] = synth_params(c);
  const auto corpus =
      generate_corpus(a, b, c.size("synth.frames_per_patient"),
                      c.size("synth.patients_per_class"), c.stage_seed("synth"), synth_jitter(c));
  const auto root = c.path("data_root");
  for (std::size_t i = 0; i < corpus.images.size(); ++i)
    write_png(root / corpus.manifest.records[i].path, corpus.images[i]);
  write_manifest(c.path("manifest"), corpus.manifest);
  write_resolved(c, "synth");
  if (read_manifest(c.path("manifest")) != corpus.manifest) {
    throw Error("manifest did not read back identically");
  }
  log("synth: " + std::to_string(corpus.images.size()) + " frames under " + root.string());
}

void run_split(const RunConfig& c) {
  const auto in = c.path("manifest");
  require_input(in);
  const auto split = patient_split(read_manifest(in), split_options(c), c.stage_seed("split"));
  write_manifest(c.path("split_manifest"), split);

  CsvTable summary{{"label", "cohort", "patients", "frames", "fraction"}, {}};
  for (Label label : {Label::non_septic, Label::septic}) {
    const double total = static_cast<double>(split.count(label));
    for (Cohort cohort : {Cohort::train, Cohort::val}) {
      std::set<std::string> patients;
      for (const auto& r : split.records)
        if (r.label == label && r.cohort == cohort) patients.insert(r.patient_id);
      const auto frames = split.count(label, cohort);
      summary.add({to_string(label), to_string(cohort), std::to_string(patients.size()),
                   std::to_string(frames), num(static_cast<double>(frames) / total)});
    }
  }
  const auto summary_path = c.path("out") / "split_summary.csv";
  write_csv(summary_path, summary);
  write_resolved(c, "split");
  if (read_manifest(c.path("split_manifest")) != split) {
    throw Error("split manifest did not read back identically");
  }
  validate_csv(summary_path, 4);
  log("split: " + std::to_string(split.patients(Cohort::train).size()) + " train / " +
      std::to_string(split.patients(Cohort::val).size()) + " val patients");
}

void run_train_cls(const RunConfig& c) {
  const auto split = read_split(c);
  const auto root = c.path("data_root");
  require_frames(split, Cohort::train, root);
  require_frames(split, Cohort::val, root);
  const auto cfg = classifier_train_config(c);
  const auto train = load_cohort<float>(split, Cohort::train, root, cfg.model.input_height,
                                        cfg.model.input_width);
  const auto val = load_cohort<float>(split, Cohort::val, root, cfg.model.input_height,
                                      cfg.model.input_width);
  log("train-cls: " + std::to_string(train.size()) + " train / " + std::to_string(val.size()) +
      " val frames, " + std::to_string(cfg.epochs) + " epochs");
  const auto result = train_classifier(train, val, cfg, c.stage_seed("train-cls"));

  CsvTable metrics{{"epoch", "train_loss", "val_loss", "val_accuracy", "val_auroc"}, {}};
  for (const auto& m : result.metrics) {
    metrics.add({std::to_string(m.epoch), num(m.train_loss), num(m.val_loss),
                 num(m.val_accuracy), num(m.val_auroc)});
    log("  epoch " + std::to_string(m.epoch) + " loss " + num(m.train_loss) + " val acc " +
        num(m.val_accuracy));
  }
  const auto metrics_path = c.path("out") / "classifier_metrics.csv";
  save_checkpoint(c.path("classifier"), result.checkpoint);
  write_csv(metrics_path, metrics);
  write_resolved(c, "train-cls");
  load_classifier<float>(load_checkpoint(c.path("classifier")));
  validate_csv(metrics_path, result.metrics.size());
}

void run_train_ae(const RunConfig& c) {
  const auto split = read_split(c);
  const auto root = c.path("data_root");
  require_frames(split, Cohort::train, root);
  require_frames(split, Cohort::val, root);
  const auto cfg = autoencoder_train_config(c);
  const auto h = cfg.model.input_height, w = cfg.model.input_width;
  const auto train = strip_labels(load_cohort<float>(split, Cohort::train, root, h, w));
  const auto monitor = strip_labels(load_cohort<float>(split, Cohort::val, root, h, w));
  log("train-ae: " + std::to_string(train.size()) + " frames, " + std::to_string(cfg.epochs) +
      " epochs");
  const auto result = train_autoencoder(train, monitor, cfg, c.stage_seed("train-ae"));

  CsvTable metrics{{"epoch", "train_mse", "heldout_mse"}, {}};
  for (const auto& m : result.metrics) {
    metrics.add({std::to_string(m.epoch), num(m.train_mse), num(m.heldout_mse)});
    log("  epoch " + std::to_string(m.epoch) + " mse " + num(m.train_mse) + " held-out " +
        num(m.heldout_mse));
  }
  const auto metrics_path = c.path("out") / "autoencoder_metrics.csv";
  save_checkpoint(c.path("autoencoder"), result.checkpoint);
  write_csv(metrics_path, metrics);
  write_resolved(c, "train-ae");
  load_autoencoder<float>(load_checkpoint(c.path("autoencoder")));
  validate_csv(metrics_path, result.metrics.size());
}

void run_eval(const RunConfig& c) {
  require_input(c.path("classifier"));
  const auto split = read_split(c);
  const auto root = c.path("data_root");
  require_frames(split, Cohort::val, root);
  const auto model = load_classifier<float>(load_checkpoint(c.path("classifier")));
  const auto& mc = model.config();
  const auto val = load_cohort<float>(split, Cohort::val, root, mc.input_height, mc.input_width);
  if (val.size() == 0) throw Error("the split manifest has no validation frames");
  const double threshold = c.real("eval.threshold");

  const auto scores = septic_scores(model, val.images);
  const auto codes = classifier_codes(model, val.images);
  std::vector<const FrameRecord*> records;
  for_cohort(split, Cohort::val, [&](const FrameRecord& r) { records.push_back(&r); });

  CsvTable preds{{"path", "patient_id", "label", "score", "predicted"}, {}};
  std::vector<FramePrediction> frame_preds;
  std::vector<Label> predicted;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Label p = scores[i] >= threshold ? Label::septic : Label::non_septic;
    predicted.push_back(p);
    frame_preds.push_back({records[i]->path, p});
    preds.add({records[i]->path, records[i]->patient_id, to_string(val.labels[i]),
               num(scores[i]), to_string(p)});
  }
  CsvTable code_table{{"path", "label"}, {}};
  const std::size_t width = codes.shape()[1];
  for (std::size_t j = 0; j < width; ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "c%03zu", j);
    code_table.header.push_back(name);
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::vector<std::string> row{records[i]->path, to_string(val.labels[i])};
    for (std::size_t j = 0; j < width; ++j) row.push_back(num(codes[i * width + j]));
    code_table.add(std::move(row));
  }

  CsvTable metrics{{"metric", "value"}, {}};
  const auto cm = confusion_matrix(predicted, val.labels);
  metrics.add({"frames", std::to_string(cm.total())});
  metrics.add({"accuracy", num(cm.accuracy())});
  metrics.add({"precision", num(cm.precision())});
  metrics.add({"recall", num(cm.recall())});
  metrics.add({"tp", std::to_string(cm.tp)});
  metrics.add({"fp", std::to_string(cm.fp)});
  metrics.add({"tn", std::to_string(cm.tn)});
  metrics.add({"fn", std::to_string(cm.fn)});

  const bool both = cm.tp + cm.fn > 0 && cm.tn + cm.fp > 0;
  CsvTable roc{{"threshold", "fpr", "tpr"}, {}};
  CsvTable pr{{"threshold", "recall", "precision"}, {}};
  if (both) {
    const auto rc = roc_curve(scores, val.labels);
    for (const auto& p : rc.points) roc.add({num(p.threshold), num(p.fpr), num(p.tpr)});
    metrics.add({"auroc", num(rc.auroc)});
    const auto pc = precision_recall(scores, val.labels, threshold);
    for (const auto& p : pc.points) pr.add({num(p.threshold), num(p.recall), num(p.precision)});
  } else {
    metrics.add({"auroc", "nan"});
  }

  CsvTable patients{{"patient", "total", "correct", "incorrect", "percent", "label"}, {}};
  for (const auto& row : patient_report(frame_preds, split).rows) {
    patients.add({row.patient, std::to_string(row.total), std::to_string(row.correct),
                  std::to_string(row.incorrect), format_percent(row.percent),
                  to_string(row.label)});
  }

  const auto out = c.path("out");
  write_csv(out / "predictions.csv", preds);
  write_csv(c.path("codes"), code_table);
  write_csv(out / "eval_metrics.csv", metrics);
  write_csv(out / "roc.csv", roc);
  write_csv(out / "pr.csv", pr);
  write_csv(out / "patients.csv", patients);
  write_resolved(c, "eval");
  validate_csv(out / "predictions.csv", scores.size());
  validate_csv(c.path("codes"), scores.size());
  validate_csv(out / "eval_metrics.csv", 9);
  validate_csv(out / "patients.csv", 1);
  log("eval: accuracy " + num(cm.accuracy()) + " on " + std::to_string(cm.total()) + " frames");
}

void run_tsne(const RunConfig& c) {
  const auto in = c.path("codes");
  require_input(in);
  const auto table = read_csv(in);
  const std::size_t n = table.rows.size();
  if (n == 0) throw Error(in.string() + ": no codes");
  const std::size_t first = table.column("label") + 1;
  const std::size_t width = table.header.size() - first;
  Tensor<double> codes({n, width});
  std::vector<Label> labels;
  for (std::size_t i = 0; i < n; ++i) {
    labels.push_back(parse_label(table.rows[i][table.column("label")]));
    for (std::size_t j = 0; j < width; ++j)
      codes[i * width + j] = parse_double(table.rows[i][first + j], in.string());
  }
  const auto cfg = tsne_config(c);
  const auto emb = tsne(codes, cfg);

  CsvTable points{{"point_id", "x", "y", "label"}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    points.add({table.rows[i][table.column("path")], num(emb.points[i][0]),
                num(emb.points[i][1]), to_string(labels[i])});
  }
  CsvTable kl{{"iteration", "kl"}, {}};
  for (std::size_t i = 0; i < emb.kl_trace.size(); ++i)
    kl.add({std::to_string(i + 1), num(emb.kl_trace[i])});
  CsvTable metrics{{"metric", "value"}, {}};
  metrics.add({"points", std::to_string(n)});
  metrics.add({"final_kl", num(emb.kl_trace.back())});
  if (cfg.exaggeration_iterations > 0 && cfg.exaggeration_iterations <= emb.kl_trace.size()) {
    metrics.add({"post_exaggeration_kl", num(emb.kl_trace[cfg.exaggeration_iterations - 1])});
  }
  std::vector<std::size_t> classes;
  for (Label l : labels) classes.push_back(class_index(l));
  metrics.add({"nn_purity",
               num(nearest_neighbor_purity(emb.points, std::span<const std::size_t>(classes)))});

  const auto out = c.path("out");
  write_csv(out / "tsne.csv", points);
  write_csv(out / "tsne_kl.csv", kl);
  write_csv(out / "tsne_metrics.csv", metrics);
  write_resolved(c, "tsne");
  validate_csv(out / "tsne.csv", n);
  validate_csv(out / "tsne_kl.csv", cfg.iterations);
  validate_csv(out / "tsne_metrics.csv", 3);
  log("tsne: final KL " + num(emb.kl_trace.back()));
}

void run_kmeans(const RunConfig& c) {
  require_input(c.path("autoencoder"));
  const auto split = read_split(c);
  const auto root = c.path("data_root");
  require_frames(split, Cohort::val, root);
  const auto model = load_autoencoder<float>(load_checkpoint(c.path("autoencoder")));
  const auto& mc = model.config();
  const auto val = load_cohort<float>(split, Cohort::val, root, mc.input_height, mc.input_width);
  if (val.size() == 0) throw Error("the split manifest has no validation frames");
  const auto z = autoencoder_bottlenecks(model, val.images);
  const auto km = kmeans_best_of(z, c.size("kmeans.k"), c.stage_seed("kmeans"),
                                 c.size("kmeans.restarts"), c.size("kmeans.max_iterations"));

  std::vector<const FrameRecord*> records;
  for_cohort(split, Cohort::val, [&](const FrameRecord& r) { records.push_back(&r); });
  CsvTable assign{{"point_id", "cluster", "label"}, {}};
  for (std::size_t i = 0; i < km.assignment.size(); ++i) {
    assign.add({records[i]->path, std::to_string(km.assignment[i]), to_string(val.labels[i])});
  }
  CsvTable trace{{"iteration", "inertia"}, {}};
  for (std::size_t i = 0; i < km.inertia_trace.size(); ++i)
    trace.add({std::to_string(i + 1), num(km.inertia_trace[i])});
  CsvTable metrics{{"metric", "value"}, {}};
  metrics.add({"points", std::to_string(km.assignment.size())});
  metrics.add({"bottleneck", std::to_string(z.shape()[1])});
  metrics.add({"k", std::to_string(c.size("kmeans.k"))});
  metrics.add({"inertia", num(km.inertia)});
  metrics.add({"iterations", std::to_string(km.iterations)});
  metrics.add({"accuracy", num(cluster_label_accuracy(km.assignment,
                                                      std::span<const Label>(val.labels)))});

  const auto out = c.path("out");
  write_csv(out / "kmeans.csv", assign);
  write_csv(out / "kmeans_inertia.csv", trace);
  write_csv(out / "kmeans_metrics.csv", metrics);
  write_resolved(c, "kmeans");
  validate_csv(out / "kmeans.csv", km.assignment.size());
  validate_csv(out / "kmeans_inertia.csv", 1);
  validate_csv(out / "kmeans_metrics.csv", 6);
  log("kmeans: cluster accuracy " + metrics.rows.back()[1]);
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> metric_map(const fs::path& p) {
  const auto t = read_csv(p);
  std::map<std::string, std::string> m;
  for (const auto& r : t.rows) m[r[t.column("metric")]] = r[t.column("value")];
  return m;
}

std::vector<std::array<double, 2>> xy(const CsvTable& t, const std::string& x,
                                      const std::string& y, const fs::path& src) {
  std::vector<std::array<double, 2>> out;
  for (const auto& r : t.rows)
    out.push_back({parse_double(r[t.column(x)], src.string()),
                   parse_double(r[t.column(y)], src.string())});
  return out;
}

void run_report(const RunConfig& c) {
  const auto dir = c.path("out");
  const std::vector<std::string> inputs = {
      "classifier_metrics.csv", "eval_metrics.csv", "roc.csv",        "pr.csv",
      "patients.csv",           "tsne.csv",         "tsne_kl.csv",    "tsne_metrics.csv",
      "autoencoder_metrics.csv", "kmeans_metrics.csv"};
  for (const auto& f : inputs) require_input(dir / f);

  CsvTable summary{{"metric", "value"}, {}};
  const auto cls = read_csv(dir / "classifier_metrics.csv");
  summary.add({"classifier_epochs", std::to_string(cls.rows.size())});
  if (!cls.rows.empty()) {
    summary.add({"classifier_final_train_loss", cls.rows.back()[cls.column("train_loss")]});
  }
  const auto ev = metric_map(dir / "eval_metrics.csv");
  for (const char* k : {"frames", "accuracy", "auroc", "precision", "recall"})
    summary.add({std::string("val_") + k, ev.at(k)});
  const auto ae = read_csv(dir / "autoencoder_metrics.csv");
  summary.add({"autoencoder_epochs", std::to_string(ae.rows.size())});
  if (!ae.rows.empty()) {
    summary.add({"autoencoder_heldout_mse", ae.rows.back()[ae.column("heldout_mse")]});
  }
  const auto km = metric_map(dir / "kmeans_metrics.csv");
  summary.add({"kmeans_bottleneck", km.at("bottleneck")});
  summary.add({"kmeans_accuracy", km.at("accuracy")});
  const auto ts = metric_map(dir / "tsne_metrics.csv");
  summary.add({"tsne_final_kl", ts.at("final_kl")});
  summary.add({"tsne_nn_purity", ts.at("nn_purity")});
  write_csv(dir / "summary.csv", summary);

  PlotSpec roc{"Receiver operating characteristic", "False positive rate", "True positive rate",
               0, 1, 0, 1, true, true};
  write_text_file(dir / "roc.svg",
                  svg_plot(roc, {{"ROC (AUROC " + ev.at("auroc") + ")", "#1f77b4",
                                  xy(read_csv(dir / "roc.csv"), "fpr", "tpr", dir / "roc.csv")}}));
  PlotSpec pr{"Precision-recall", "Recall", "Precision", 0, 1, 0, 1.05, true, false};
  write_text_file(dir / "pr.svg",
                  svg_plot(pr, {{"validation", "#d62728",
                                 xy(read_csv(dir / "pr.csv"), "recall", "precision",
                                    dir / "pr.csv")}}));
  PlotSpec kl{"t-SNE objective", "Iteration", "KL divergence"};
  write_text_file(dir / "tsne_kl.svg",
                  svg_plot(kl, {{"KL", "#2ca02c",
                                 xy(read_csv(dir / "tsne_kl.csv"), "iteration", "kl",
                                    dir / "tsne_kl.csv")}}));
  const auto pts = read_csv(dir / "tsne.csv");
  PlotSeries septic{"septic", "#d62728", {}}, non_septic{"non-septic", "#1f77b4", {}};
  for (const auto& r : pts.rows) {
    const std::array<double, 2> p{parse_double(r[pts.column("x")], "tsne.csv"),
                                  parse_double(r[pts.column("y")], "tsne.csv")};
    (parse_label(r[pts.column("label")]) == Label::septic ? septic : non_septic)
        .points.push_back(p);
  }
  PlotSpec scatter{"t-SNE of classifier codes", "t-SNE 1", "t-SNE 2"};
  scatter.lines = false;
  write_text_file(dir / "tsne.svg", svg_plot(scatter, {non_septic, septic}));

  const auto pat = read_csv(dir / "patients.csv");
  std::string md = "| Patient | Total frames | Correct | Incorrect | Accuracy (%) | Label |\n"
                   "|---|---|---|---|---|---|\n";
  for (const auto& r : pat.rows) {
    md += "| " + r[0] + " | " + r[1] + " | " + r[2] + " | " + r[3] + " | " + r[4] + " | " +
          r[5] + " |\n";
  }
  write_text_file(dir / "patients.md", md);
  write_resolved(c, "report");
  validate_csv(dir / "summary.csv", 10);
  for (const char* f : {"roc.svg", "pr.svg", "tsne_kl.svg", "tsne.svg"}) {
    if (read_text_file(dir / f).find("</svg>") == std::string::npos) {
      throw Error(std::string(f) + " is incomplete");
    }
  }
  log("report: " + (dir / "summary.csv").string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfml: septic microcirculation image pipeline"};
  app.require_subcommand(1);

  struct Stage {
    const char* name;
    const char* help;
    std::string section;
    std::vector<std::string> shared;
    std::function<void(const RunConfig&)> run;
  };
  const std::vector<Stage> stages = {
      {"synth", "generate a synthetic capillary corpus", "synth.", {"data_root", "manifest"},
       run_synth},
      {"split", "assign patients to train/val cohorts", "split.", {"manifest", "split_manifest"},
       run_split},
      {"train-cls", "train the classifier", "cls.", {"split_manifest", "data_root", "classifier"},
       run_train_cls},
      {"train-ae", "train the autoencoder", "ae.", {"split_manifest", "data_root", "autoencoder"},
       run_train_ae},
      {"eval", "evaluate the classifier on the validation cohort", "eval.",
       {"split_manifest", "data_root", "classifier", "codes"}, run_eval},
      {"tsne", "embed classifier codes in two dimensions", "tsne.", {"codes"}, run_tsne},
      {"kmeans", "cluster autoencoder bottlenecks", "kmeans.",
       {"split_manifest", "data_root", "autoencoder"}, run_kmeans},
      {"report", "collate metrics and render plots", "", {}, run_report},
  };
  std::vector<Invocation> invocations(stages.size());
  std::vector<CLI::App*> commands;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto* cmd = app.add_subcommand(stages[i].name, stages[i].help);
    add_options(cmd, invocations[i], stages[i].section, stages[i].shared);
    commands.push_back(cmd);
  }
  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!commands[i]->parsed()) continue;
    try {
      const RunConfig config = invocations[i].resolve();
      fs::create_directories(config.path("out"));
      stages[i].run(config);
      return 0;
    } catch (const MissingInput& e) {
      std::cerr << "dfml " << stages[i].name << ": " << e.what() << '\n';
      return kExitMissingInput;
    } catch (const SplitInfeasible& e) {
      std::cerr << "dfml " << stages[i].name << ": split infeasible: " << e.what() << '\n';
      return kExitInfeasible;
    } catch (const std::exception& e) {
      std::cerr << "dfml " << stages[i].name << ": " << e.what() << '\n';
      return kExitFailure;
    }
  }
  return kExitFailure;
}
