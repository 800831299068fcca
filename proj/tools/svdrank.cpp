// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// svdrank command-line entry point.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "svdrank/dataset.hpp"
#include "svdrank/experiment.hpp"
#include "svdrank/features.hpp"
#include "svdrank/metrics.hpp"
#include "svdrank/scorer.hpp"
#include "svdrank/service.hpp"
#include "svdrank/synth.hpp"
#include "svdrank/training.hpp"

namespace fs = std::filesystem;
using namespace svdrank;

namespace {

constexpr int kUsageExit = 2;

struct Inputs {
  std::string manifest;
  std::vector<std::string> labels;
};

void add_inputs(CLI::App* cmd, Inputs& in, bool labels_required = true) {
  cmd->add_option("--manifest", in.manifest, "corpus manifest (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* opt = cmd->add_option("--labels", in.labels, "label files (JSON lines)")
                  ->check(CLI::ExistingFile);
  if (labels_required) opt->required();
}

LabelSet read_labels(const Corpus& corpus, const std::vector<std::string>& files) {
  LabelSet ls;
  for (const auto& f : files) load_labels(f, corpus, ls);
  return ls;
}

void add_hyperparams(CLI::App* cmd, Hyperparams& hp) {
  cmd->add_option("--lr", hp.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", hp.batch_size, "mini-batch size")->capture_default_str();
  cmd->add_option("--epochs", hp.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--dropout", hp.dropout, "dropout rate")->capture_default_str();
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::vector<CcrLabel> select_ccr(const LabelSet& ls, const std::vector<std::size_t>& idx) {
  std::vector<CcrLabel> out;
  for (std::size_t k : idx) out.push_back(ls.ccr.at(k));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate subjective voice descriptor scorers from ACR and CCR labels",
               "svdrank"};
  app.require_subcommand(0, 1);

  // extract ---------------------------------------------------------------
  auto* extract = app.add_subcommand("extract", "compute spectrogram caches from audio");
  std::string ex_manifest, ex_out;
  bool ex_pooled = false, ex_normalize = false;
  double ex_level = kDefaultTargetDb;
  extract->add_option("--manifest", ex_manifest)->required()->check(CLI::ExistingFile);
  extract->add_option("--out", ex_out, "output directory")->required();
  extract->add_flag("--pooled", ex_pooled, "write time-averaged SVDF vectors instead of SVDS");
  extract->add_flag("--normalize", ex_normalize, "level-normalize before analysis");
  extract->add_option("--level-db", ex_level, "normalization target (dBFS RMS)")
      ->capture_default_str();

  // synth -----------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with labels");
  WorldConfig wc;
  std::string sy_out, sy_svd = "youthfulF";
  std::size_t sy_acr = 9000, sy_ccr = 15000, sy_questions = 50, sy_panel = 50;
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->add_option("--svd", sy_svd)->capture_default_str();
  synth->add_option("--speakers", wc.n_speakers)->capture_default_str();
  synth->add_option("--utts", wc.utts_per_speaker, "utterances per speaker")->capture_default_str();
  synth->add_option("--dim", wc.feature_dim, "pooled feature dimension")->capture_default_str();
  synth->add_option("--sentences", wc.n_sentences)->capture_default_str();
  synth->add_option("--sigma-jitter", wc.sigma_jitter)->capture_default_str();
  synth->add_option("--sigma-label", wc.sigma_label)->capture_default_str();
  synth->add_option("--tau", wc.tau)->capture_default_str();
  synth->add_option("--feature-noise", wc.feature_noise)->capture_default_str();
  synth->add_flag("--audio", wc.render_audio, "render WAVE audio instead of pooled features");
  synth->add_option("--acr", sy_acr, "ACR labels to generate")->capture_default_str();
  synth->add_option("--ccr", sy_ccr, "CCR labels to generate")->capture_default_str();
  synth->add_option("--panel-questions", sy_questions)->capture_default_str();
  synth->add_option("--panel-annotators", sy_panel)->capture_default_str();
  synth->add_option("--seed", wc.seed)->capture_default_str();

  // split -----------------------------------------------------------------
  auto* split = app.add_subcommand("split", "speaker-disjoint train/test split");
  Inputs sp_in;
  std::string sp_svd, sp_out;
  std::size_t sp_speakers = 0;
  std::uint64_t sp_seed = 0;
  add_inputs(split, sp_in);
  split->add_option("--svd", sp_svd)->required();
  split->add_option("--train-speakers", sp_speakers, "0 = 60% of eligible speakers")
      ->capture_default_str();
  split->add_option("--seed", sp_seed)->capture_default_str();
  split->add_option("--out", sp_out, "split JSON")->required();

  // train -----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train one scorer");
  Inputs tr_in;
  Hyperparams tr_hp;
  std::string tr_split, tr_mode = "ccr", tr_arch = "pooled_fc", tr_out, tr_report;
  std::size_t tr_hidden = 256, tr_n = 0;
  std::uint64_t tr_seed = 0;
  add_inputs(train, tr_in);
  train->add_option("--split", tr_split)->required()->check(CLI::ExistingFile);
  train->add_option("--mode", tr_mode, "acr or ccr")->capture_default_str();
  train->add_option("--arch", tr_arch, "pooled_fc or conv_pool")->capture_default_str();
  train->add_option("--hidden", tr_hidden, "pooled_fc hidden width")->capture_default_str();
  train->add_option("--n", tr_n, "subsample n training labels (0 = all)")->capture_default_str();
  add_hyperparams(train, tr_hp);
  train->add_option("--seed", tr_seed)->capture_default_str();
  train->add_option("--out", tr_out, "checkpoint path")->required();
  train->add_option("--report", tr_report, "per-epoch CSV (default stdout)");

  // eval ------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "ppref report for a trained scorer");
  Inputs ev_in;
  std::string ev_split, ev_model, ev_svd, ev_panel, ev_out;
  add_inputs(eval, ev_in);
  eval->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  eval->add_option("--split", ev_split, "evaluate on the split's test comparisons")
      ->check(CLI::ExistingFile);
  eval->add_option("--svd", ev_svd, "evaluate on all CCR labels of this SVD");
  eval->add_option("--panel", ev_panel, "panel label file for upper bounds")
      ->check(CLI::ExistingFile);
  eval->add_option("--out", ev_out, "report JSON (default stdout)");

  // agreement -------------------------------------------------------------
  auto* agreement = app.add_subcommand("agreement", "upper bounds from panel agreement");
  std::vector<std::string> ag_labels;
  std::string ag_svd;
  std::size_t ag_min = 2;
  agreement->add_option("--labels", ag_labels, "panel CCR label files")
      ->required()
      ->check(CLI::ExistingFile);
  agreement->add_option("--svd", ag_svd);
  agreement->add_option("--min-responses", ag_min, "responses needed for a common question")
      ->capture_default_str();

  // pseudo-f --------------------------------------------------------------
  auto* pf = app.add_subcommand("pseudo-f", "speaker-grouped pseudo-F of ACR ratings");
  Inputs pf_in;
  std::string pf_svd;
  add_inputs(pf, pf_in);
  pf->add_option("--svd", pf_svd)->required();

  // experiment ------------------------------------------------------------
  auto* experiment = app.add_subcommand("experiment", "label-efficiency sweep");
  Inputs xp_in;
  ExperimentConfig xp;
  std::string xp_svd, xp_modes = "acr,ccr", xp_arch = "pooled_fc", xp_out, xp_ckpt;
  std::vector<std::size_t> xp_sizes = kDefaultSizes;
  std::size_t xp_seeds = 5;
  std::uint64_t xp_seed = 0;
  bool xp_no_stamp = false;
  add_inputs(experiment, xp_in);
  experiment->add_option("--svd", xp_svd)->required();
  experiment->add_option("--modes", xp_modes, "comma list of acr,ccr")->capture_default_str();
  experiment->add_option("--sizes", xp_sizes, "training-set sizes")->delimiter(',');
  experiment->add_option("--seeds", xp_seeds, "number of seeds")->capture_default_str();
  experiment->add_option("--seed", xp_seed, "first seed")->capture_default_str();
  experiment->add_option("--arch", xp_arch)->capture_default_str();
  experiment->add_option("--hidden", xp.hidden_dim)->capture_default_str();
  add_hyperparams(experiment, xp.hp);
  experiment->add_option("--train-speakers", xp.train_speakers, "0 = 60% of eligible speakers")
      ->capture_default_str();
  experiment->add_option("--split-seed", xp.split_seed)->capture_default_str();
  experiment->add_option("--test-size", xp.test_size, "held-out comparisons per subset")
      ->capture_default_str();
  experiment->add_option("--out", xp_out, "result CSV (default stdout)");
  experiment->add_option("--checkpoints", xp_ckpt, "directory for per-run checkpoints");
  experiment->add_flag("--no-timestamp", xp_no_stamp, "omit the timestamp header line");

  // serve -----------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "annotation HTTP service");
  std::string sv_data = env_or("SVDRANK_DATA_DIR", ""), sv_labels = env_or("SVDRANK_LABELS", "");
  std::string sv_store, sv_host = "127.0.0.1";
  int sv_port = std::atoi(env_or("SVDRANK_PORT", "8080").c_str());
  std::uint64_t sv_seed = 0;
  serve->add_option("--data-dir", sv_data, "corpus root containing manifest.jsonl");
  serve->add_option("--labels", sv_labels, "label file to append to");
  serve->add_option("--store", sv_store, "session store (default <data-dir>/sessions.json)");
  serve->add_option("--host", sv_host)->capture_default_str();
  serve->add_option("--port", sv_port)->capture_default_str();
  serve->add_option("--seed", sv_seed)->capture_default_str();

  if (argc < 2) {
    std::cerr << app.help();
    return kUsageExit;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kUsageExit;
  }

  try {
    if (*extract) {
      const Corpus corpus = load_corpus(ex_manifest);
      const fs::path base = fs::path(ex_manifest).parent_path();
      const fs::path out(ex_out);
      fs::create_directories(out / "features");
      std::vector<Utterance> utts;
      for (Utterance u : corpus.utterances()) {
        if (u.source_kind == SourceKind::audio) {
          fs::path src(u.source_path);
          if (src.is_relative()) src = base / src;
          Waveform w = load_wav(src.string());
          if (ex_normalize) w = level_normalize(w, ex_level);
          const Spectrogram s = stft_magnitude(w);
          const std::string rel =
              "features/" + u.id + (ex_pooled ? ".svdf" : ".svds");
          if (ex_pooled)
            save_pooled_feature(time_average(s), (out / rel).string());
          else
            save_spectrogram(s, (out / rel).string());
          u.source_kind = SourceKind::feature;
          u.source_path = rel;
        } else if (fs::path(u.source_path).is_relative()) {
          u.source_path = fs::absolute(base / u.source_path).string();
        }
        utts.push_back(std::move(u));
      }
      save_manifest(Corpus(std::move(utts)), (out / "manifest.jsonl").string());
      std::cout << "wrote " << corpus.size() << " entries to " << (out / "manifest.jsonl")
                << '\n';
      return 0;
    }

    if (*synth) {
      const Svd svd = svd_from_id(sy_svd);
      const SyntheticCorpus sc = generate_corpus(wc);
      const fs::path out(sy_out);
      write_synthetic_corpus(sc, out);
      const SyntheticLabels sl =
          synthesize_labels(sc, svd, {sy_acr, sy_ccr, sy_questions, sy_panel});
      save_labels(sl.labels.acr, (out / "labels_acr.jsonl").string());
      save_labels(sl.labels.ccr, (out / "labels_ccr.jsonl").string());
      save_labels(sl.panel, (out / "panel.jsonl").string());
      std::cout << "wrote synthetic corpus of " << sc.corpus.size() << " utterances to " << out
                << '\n';
      return 0;
    }

    if (*split) {
      const Corpus corpus = load_corpus(sp_in.manifest);
      const LabelSet ls = read_labels(corpus, sp_in.labels);
      const Svd svd = svd_from_id(sp_svd);
      const std::size_t n = sp_speakers ? sp_speakers : default_train_speakers(corpus, svd);
      const SplitPlan plan = make_split(corpus, ls, svd, n, sp_seed);
      save_split(plan, sp_out);
      std::cout << "train speakers " << plan.train_speakers.size() << ", train ACR "
                << plan.train_acr.size() << ", train CCR " << plan.train_ccr.size()
                << ", test CCR " << plan.test_ccr.size() << '\n';
      return 0;
    }

    if (*train) {
      const Corpus corpus = load_corpus(tr_in.manifest);
      const LabelSet ls = read_labels(corpus, tr_in.labels);
      SplitPlan plan = load_split(tr_split, ls);
      const TrainMode mode = parse_mode(tr_mode);
      const Architecture arch = parse_arch(tr_arch);
      if (tr_n)
        plan = subsample_training(plan, tr_n, tr_seed,
                                  {mode == TrainMode::acr, mode == TrainMode::ccr});
      const FeatureStore features =
          load_features(corpus, fs::path(tr_in.manifest).parent_path(), arch);
      const auto test = select_ccr(ls, plan.test_ccr);
      EvalHook hook;
      if (!test.empty())
        hook = [&](const ScorerParameters& m) { return evaluate_ppref(m, test, features); };
      ScorerParameters init = init_model(arch, input_dim(features), tr_hidden, tr_seed);
      TrainResult res;
      if (mode == TrainMode::acr) {
        std::vector<AcrLabel> labels;
        for (std::size_t k : plan.train_acr) labels.push_back(ls.acr[k]);
        res = train_acr(std::move(init), labels, features, tr_hp, tr_seed, hook);
      } else {
        res = train_ccr(std::move(init), select_ccr(ls, plan.train_ccr), features, tr_hp,
                        tr_seed, hook);
      }
      save_checkpoint(res.model, tr_out);
      std::ofstream report_file;
      if (!tr_report.empty()) report_file.open(tr_report);
      std::ostream& rep = tr_report.empty() ? std::cout : report_file;
      rep << "epoch,train_loss,ppref_strong,ppref_weak\n";
      for (const EpochReport& r : res.reports) {
        rep << r.epoch << ',' << r.train_loss << ',';
        if (r.ppref_strong) rep << *r.ppref_strong;
        rep << ',';
        if (r.ppref_weak) rep << *r.ppref_weak;
        rep << '\n';
      }
      return 0;
    }

    if (*eval) {
      if (ev_split.empty() == ev_svd.empty()) {
        std::cerr << "eval: give exactly one of --split or --svd\n";
        return kUsageExit;
      }
      const Corpus corpus = load_corpus(ev_in.manifest);
      const LabelSet ls = read_labels(corpus, ev_in.labels);
      const ScorerParameters model = load_checkpoint(ev_model);
      const FeatureStore features =
          load_features(corpus, fs::path(ev_in.manifest).parent_path(), model.arch);
      std::vector<CcrLabel> test;
      std::string svd = ev_svd;
      if (!ev_split.empty()) {
        const SplitPlan plan = load_split(ev_split, ls);
        test = select_ccr(ls, plan.test_ccr);
        svd = plan.svd_id;
      } else {
        for (const auto& l : ls.ccr)
          if (l.svd_id == svd) test.push_back(l);
      }
      std::optional<UpperBound> ub;
      if (!ev_panel.empty()) {
        LabelSet panel;
        load_labels(ev_panel, corpus, panel);
        ub = upper_bound_estimate(tally_responses(panel.ccr, 2, svd));
      }
      const auto report = metric_report(svd, predict_pairs(model, test, features), ub);
      if (ev_out.empty())
        std::cout << report.dump(2) << '\n';
      else
        std::ofstream(ev_out) << report.dump(2) << '\n';
      return 0;
    }

    if (*agreement) {
      std::vector<CcrLabel> labels;
      for (const auto& f : ag_labels) {
        std::ifstream in(f);
        detail::for_each_jsonl(in, f, [&](const json& j, std::size_t line) {
          auto rec = label_from_json(j, f, line);
          if (auto* c = std::get_if<CcrLabel>(&rec)) labels.push_back(*c);
        });
      }
      const auto tallies = tally_responses(labels, ag_min, ag_svd);
      const UpperBound ub = upper_bound_estimate(tallies);
      json j{{"questions", tallies.size()},
             {"strong_questions", ub.strong_questions},
             {"weak_questions", ub.weak_questions},
             {"ub_strong", ub.strong ? json(*ub.strong) : json(nullptr)},
             {"ub_weak", ub.weak ? json(*ub.weak) : json(nullptr)}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (*pf) {
      const Corpus corpus = load_corpus(pf_in.manifest);
      const LabelSet ls = read_labels(corpus, pf_in.labels);
      std::map<std::string, std::vector<double>> by_speaker;
      for (const auto& l : ls.acr)
        if (l.svd_id == pf_svd)
          by_speaker[corpus.at(l.utterance_id).speaker_id].push_back(l.rating);
      std::vector<std::vector<double>> groups;
      for (auto& [spk, g] : by_speaker) groups.push_back(std::move(g));
      const double f = pseudo_f(groups);
      std::cout << json{{"svd", pf_svd}, {"groups", groups.size()},
                        {"pseudo_f", std::isinf(f) ? json("inf") : json(f)}}
                       .dump(2)
                << '\n';
      return 0;
    }

    if (*experiment) {
      const Corpus corpus = load_corpus(xp_in.manifest);
      const LabelSet ls = read_labels(corpus, xp_in.labels);
      xp.svd = svd_from_id(xp_svd);
      xp.arch = parse_arch(xp_arch);
      xp.sizes = xp_sizes;
      xp.modes.clear();
      std::stringstream ms(xp_modes);
      for (std::string m; std::getline(ms, m, ',');) xp.modes.push_back(parse_mode(m));
      if (xp.modes.empty() || xp_seeds == 0) {
        std::cerr << "experiment: need at least one mode and one seed\n";
        return kUsageExit;
      }
      xp.hp.seeds.clear();
      for (std::size_t k = 0; k < xp_seeds; ++k) xp.hp.seeds.push_back(xp_seed + k);
      if (!xp_ckpt.empty()) xp.checkpoint_dir = fs::path(xp_ckpt);
      const FeatureStore features =
          load_features(corpus, fs::path(xp_in.manifest).parent_path(), xp.arch);
      const ExperimentResult res = run_experiment(corpus, ls, features, xp);
      const std::string stamp = xp_no_stamp ? "" : "generated " + timestamp();
      if (xp_out.empty()) {
        write_result_csv(res, std::cout, stamp);
      } else {
        std::ofstream out(xp_out);
        write_result_csv(res, out, stamp);
      }
      return 0;
    }

    if (*serve) {
      if (sv_data.empty() || sv_labels.empty()) {
        std::cerr << "serve: --data-dir/SVDRANK_DATA_DIR and --labels/SVDRANK_LABELS are required\n";
        return kUsageExit;
      }
      const fs::path data(sv_data);
      Corpus corpus = load_corpus((data / "manifest.jsonl").string());
      AnnotationService service(std::move(corpus), data, sv_labels,
                                sv_store.empty() ? data / "sessions.json" : fs::path(sv_store),
                                sv_seed);
      httplib::Server srv;
      service.bind(srv);
      std::cout << "listening on http://" << sv_host << ':' << sv_port << std::endl;
      if (!srv.listen(sv_host, sv_port)) {
        std::cerr << "cannot listen on " << sv_host << ':' << sv_port << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
