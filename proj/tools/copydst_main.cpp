// copydst command line: synth | prepare | train | predict | track | evaluate.
// Every command writes a manifest next to its main output and takes its
// randomness from --seed (DST_SEED as fallback).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "copydst/corpus.hpp"
#include "copydst/eval.hpp"
#include "copydst/manifest.hpp"
#include "copydst/model.hpp"
#include "copydst/ontology.hpp"
#include "copydst/oracle.hpp"
#include "copydst/predictions.hpp"
#include "copydst/synth.hpp"
#include "copydst/tokenizer.hpp"
#include "copydst/tracker.hpp"
#include "copydst/trainer.hpp"

#ifndef COPYDST_GIT_DESCRIBE
#define COPYDST_GIT_DESCRIBE "unknown"
#endif
#ifndef COPYDST_DATA_DIR
#define COPYDST_DATA_DIR "data"
#endif

namespace {

using namespace copydst;
using ordered_json = nlohmann::ordered_json;

std::uint64_t env_seed_or(std::uint64_t fallback) {
  const char* env = std::getenv("DST_SEED");
  if (!env) return fallback;
  try {
    return std::stoull(env);
  } catch (...) {
    return fallback;
  }
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

RunManifest base_manifest(const std::string& command, int argc, char** argv) {
  RunManifest m;
  m.command = command;
  for (int i = 0; i < argc; ++i) m.argv.push_back(argv[i]);
  m.git_describe = COPYDST_GIT_DESCRIBE;
  return m;
}

void check_prep_match(const Corpus& corpus, const PrepInfo& want, const std::string& path) {
  if (!corpus.prep)
    throw std::runtime_error("corpus '" + path + "' is not prepared (run prepare first)");
  if (corpus.prep->max_len != want.max_len || corpus.prep->mask_history != want.mask_history ||
      corpus.prep->no_history != want.no_history)
    throw std::runtime_error("corpus '" + path +
                             "' was prepared under different assembly settings");
}

std::string basename_of(const std::string& path) {
  return std::filesystem::path(path).filename().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"value-independent dialog state tracking engine"};
  app.require_subcommand(1);

  int jobs = 0;
  app.add_option("--jobs", jobs, "bound intra-command parallelism (0 = hardware default)");

  std::string ontology_path = std::string(COPYDST_DATA_DIR) + "/ontology.json";
  app.add_option("--ontology", ontology_path, "ontology JSON file")->capture_default_str();

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthSpec synth_spec;
  std::string templates_path = std::string(COPYDST_DATA_DIR) + "/templates.json";
  std::string synth_out = "corpus.json";
  synth->add_option("--dialogs", synth_spec.dialogs, "number of dialogs")->capture_default_str();
  synth->add_option("--seed", synth_spec.seed, "rng seed");
  synth->add_option("--split", synth_spec.split, "split tag (train|dev|test)")
      ->capture_default_str();
  synth->add_flag("--oov", synth_spec.oov, "use the out-of-vocabulary value pools");
  synth->add_option("--templates", templates_path, "scenario template file")
      ->capture_default_str();
  synth->add_option("-o,--out", synth_out, "output corpus file")->required();

  // ---- prepare ----
  auto* prepare = app.add_subcommand("prepare", "fill gate and span labels");
  std::string prep_in, prep_out, prep_vocab_from, prep_config;
  int prep_max_len = 180;
  bool prep_no_masking = false, prep_no_history = false;
  prepare->add_option("--in", prep_in, "input corpus")->required();
  prepare->add_option("-o,--out", prep_out, "output corpus")->required();
  prepare->add_option("--vocab-from", prep_vocab_from,
                      "corpus whose training texts define the subword vocabulary "
                      "(default: the input corpus)");
  prepare->add_option("--config", prep_config, "training config supplying assembly settings");
  prepare->add_option("--max-len", prep_max_len, "maximum input length")->capture_default_str();
  prepare->add_flag("--no-masking", prep_no_masking, "do not mask informed values in history");
  prepare->add_flag("--no-history", prep_no_history, "assemble single-turn inputs");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train the tracker model");
  std::string train_in, dev_in, train_config_path, train_out = "model.ckpt";
  TrainConfig cli_cfg;
  bool f_no_masking = false, f_no_history = false, f_no_aux = false, f_single_copy = false;
  std::optional<std::uint64_t> f_seed;
  std::optional<int> f_epochs;
  std::optional<double> f_lr;
  train->add_option("--train", train_in, "prepared train corpus")->required();
  train->add_option("--dev", dev_in, "prepared dev corpus")->required();
  train->add_option("--config", train_config_path, "training config JSON");
  train->add_option("--seed", f_seed, "rng seed (overrides config)");
  train->add_option("--epochs", f_epochs, "epochs (overrides config)");
  train->add_option("--lr", f_lr, "learning rate (overrides config)");
  train->add_flag("--no-masking", f_no_masking, "disable history value masking");
  train->add_flag("--no-history", f_no_history, "single-turn inputs");
  train->add_flag("--no-aux", f_no_aux, "disable auxiliary feature fusion");
  train->add_flag("--single-copy", f_single_copy, "span-only gate collapse");
  train->add_option("-o,--out", train_out, "checkpoint output")->capture_default_str();

  // ---- predict ----
  auto* predict = app.add_subcommand("predict", "write per-turn argmax predictions");
  std::string pred_model, pred_corpus, pred_out = "preds.jsonl";
  predict->add_option("--model", pred_model, "checkpoint")->required();
  predict->add_option("--corpus", pred_corpus, "prepared corpus")->required();
  predict->add_option("-o,--out", pred_out, "predictions output")->capture_default_str();

  // ---- track ----
  auto* track = app.add_subcommand("track", "apply the state machine over a dialog corpus");
  std::string track_corpus, track_pred, track_out = "states.jsonl", track_vocab_from;
  bool track_oracle = false;
  track->add_option("--corpus", track_corpus, "prepared corpus")->required();
  track->add_option("--pred", track_pred, "predictions file");
  track->add_flag("--oracle", track_oracle, "drive the tracker with gold labels");
  track->add_option("--vocab-from", track_vocab_from,
                    "corpus defining the subword vocabulary (default: --corpus)");
  track->add_option("-o,--out", track_out, "states output")->capture_default_str();

  // ---- evaluate ----
  auto* evaluate = app.add_subcommand("evaluate", "score predicted states against gold");
  std::string eval_gold, eval_train, eval_out, eval_table, eval_seeds;
  std::vector<std::string> eval_pred, eval_gates;
  evaluate->add_option("--gold", eval_gold, "gold corpus")->required();
  evaluate->add_option("--pred", eval_pred, "predicted states file(s), one per run")->required();
  evaluate->add_option("--gates", eval_gates, "predictions file(s) for gate metrics");
  evaluate->add_option("--train", eval_train, "train corpus for recall-by-frequency buckets");
  evaluate->add_option("--seeds", eval_seeds, "comma-separated run labels");
  evaluate->add_option("-o,--out", eval_out, "report JSON output");
  evaluate->add_option("--table", eval_table, "plain-text table output");

  CLI11_PARSE(app, argc, argv);
  if (jobs > 0) omp_set_num_threads(jobs);

  Timer timer;
  try {
    const Ontology ont = Ontology::load(ontology_path);

    if (*synth) {
      if (!synth->count("--seed")) synth_spec.seed = env_seed_or(synth_spec.seed);
      const TemplateSet templates = load_templates(templates_path);
      SynthReport report;
      const Corpus corpus = synth_corpus(synth_spec, ont, templates, &report);
      save_corpus(corpus, synth_out);
      ordered_json extras;
      extras["turns"] = report.turns;
      for (const auto& [gate, share] : report.share) extras["share"][gate] = share;
      for (const auto& [gate, count] : report.gate_counts) extras["counts"][gate] = count;
      std::cout << "wrote " << corpus.dialogs.size() << " dialogs to " << synth_out << "\n";
      for (const auto& [gate, share] : report.share)
        std::cout << "  " << gate << ": " << share << "\n";
      RunManifest m = base_manifest("synth", argc, argv);
      m.seed = synth_spec.seed;
      m.inputs = {ontology_path, templates_path};
      m.outputs = {synth_out};
      m.wall_time_s = timer.seconds();
      m.extras_json = extras.dump();
      write_manifest(m, synth_out);
    }

    if (*prepare) {
      PrepInfo prep;
      if (!prep_config.empty()) {
        const TrainConfig cfg = TrainConfig::load(prep_config);
        prep = cfg.prep();
      }
      if (prepare->count("--max-len")) prep.max_len = prep_max_len;
      if (prep_no_masking) prep.mask_history = false;
      if (prep_no_history) prep.no_history = true;
      Corpus corpus = load_corpus(prep_in, ont);
      const std::string vocab_src = prep_vocab_from.empty() ? prep_in : prep_vocab_from;
      const Corpus vocab_corpus = vocab_src == prep_in ? corpus : load_corpus(vocab_src, ont);
      const Vocab vocab = Vocab::build(corpus_texts(vocab_corpus));
      const Tokenizer tok(&vocab);
      const PrepareStats stats = prepare_corpus(corpus, ont, tok, prep);
      save_corpus(corpus, prep_out);
      std::cout << "prepared " << stats.turns << " turns: " << stats.span_labels
                << " span labels, " << stats.derived_gates << " derived gates, "
                << stats.downgraded << " downgraded to none\n";
      RunManifest m = base_manifest("prepare", argc, argv);
      m.inputs = {prep_in, vocab_src, ontology_path};
      m.outputs = {prep_out};
      m.wall_time_s = timer.seconds();
      ordered_json extras;
      extras["turns"] = stats.turns;
      extras["span_labels"] = stats.span_labels;
      extras["derived_gates"] = stats.derived_gates;
      extras["downgraded"] = stats.downgraded;
      extras["prep"] = {{"max_len", prep.max_len},
                        {"mask_history", prep.mask_history},
                        {"no_history", prep.no_history}};
      m.extras_json = extras.dump();
      write_manifest(m, prep_out);
    }

    if (*train) {
      TrainConfig cfg;
      bool config_sets_seed = false;
      if (!train_config_path.empty()) {
        std::ifstream in(train_config_path);
        if (!in) throw std::runtime_error("cannot open config file '" + train_config_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = TrainConfig::from_json_text(ss.str());
        config_sets_seed = ordered_json::parse(ss.str()).contains("seed");
      }
      // Seed precedence: --seed flag, then config, then DST_SEED, then default.
      if (!config_sets_seed) cfg.seed = env_seed_or(cfg.seed);
      if (f_seed) cfg.seed = *f_seed;
      if (f_epochs) cfg.epochs = *f_epochs;
      if (f_lr) cfg.lr = *f_lr;
      if (f_no_masking) cfg.mask_history = false;
      if (f_no_history) cfg.no_history = true;
      if (f_no_aux) cfg.no_aux = true;
      if (f_single_copy) cfg.single_copy = true;
      cfg.validate();

      Corpus train_corpus = load_corpus(train_in, ont);
      Corpus dev_corpus = load_corpus(dev_in, ont);
      if (train_corpus.dialogs.empty())
        throw std::runtime_error("train split '" + train_in + "' is empty");
      if (dev_corpus.dialogs.empty())
        throw std::runtime_error("dev split '" + dev_in + "' is empty");
      const Vocab vocab = Vocab::build(corpus_texts(train_corpus));
      const Tokenizer tok(&vocab);
      if (cfg.single_copy) collapse_single_copy(train_corpus, ont, tok, cfg.prep());
      Model model(cfg.model_config(), ont, vocab);
      const TrainResult result = train_model(model, train_corpus, dev_corpus, cfg, tok);
      model.save_checkpoint(train_out, cfg.to_json());
      std::cout << "best dev JGA " << result.best_dev_jga << " at epoch " << result.best_epoch
                << " (" << result.steps << " steps)\n";
      RunManifest m = base_manifest("train", argc, argv);
      m.config_json = cfg.to_json();
      m.seed = cfg.seed;
      m.inputs = {train_in, dev_in, ontology_path};
      m.outputs = {train_out};
      m.wall_time_s = timer.seconds();
      ordered_json extras;
      extras["best_dev_jga"] = result.best_dev_jga;
      extras["best_epoch"] = result.best_epoch;
      extras["steps"] = result.steps;
      extras["dev_jga_history"] = result.dev_jga_history;
      m.extras_json = extras.dump();
      write_manifest(m, train_out);
    }

    if (*predict) {
      Model::Loaded loaded = Model::load_checkpoint(pred_model, ont);
      const TrainConfig cfg = TrainConfig::from_json_text(loaded.config_json);
      Corpus corpus = load_corpus(pred_corpus, ont);
      check_prep_match(corpus, cfg.prep(), pred_corpus);
      const Tokenizer tok(&loaded.model->vocab());
      PredictionsFile preds;
      preds.header.max_len = cfg.max_len;
      preds.header.mask_history = cfg.mask_history;
      preds.header.no_history = cfg.no_history;
      preds.header.no_aux = cfg.no_aux;
      preds.header.single_copy = cfg.single_copy;
      preds.header.seed = cfg.seed;
      run_model_tracking(*loaded.model, corpus, tok, cfg.prep(), &preds);
      save_predictions(preds, pred_out);
      std::cout << "wrote predictions for " << preds.turns.size() << " turns to " << pred_out
                << "\n";
      RunManifest m = base_manifest("predict", argc, argv);
      m.config_json = loaded.config_json;
      m.seed = cfg.seed;
      m.inputs = {pred_model, pred_corpus, ontology_path};
      m.outputs = {pred_out};
      m.wall_time_s = timer.seconds();
      write_manifest(m, pred_out);
    }

    if (*track) {
      Corpus corpus = load_corpus(track_corpus, ont);
      if (!corpus.prep)
        throw std::runtime_error("corpus '" + track_corpus + "' is not prepared");
      const std::string vocab_src = track_vocab_from.empty() ? track_corpus : track_vocab_from;
      const Corpus vocab_corpus = vocab_src == track_corpus ? corpus : load_corpus(vocab_src, ont);
      const Vocab vocab = Vocab::build(corpus_texts(vocab_corpus));
      const Tokenizer tok(&vocab);
      const PrepInfo prep = *corpus.prep;

      StatesFile states;
      std::vector<std::string> order;
      if (track_oracle) {
        const PredictionProvider provider = oracle_provider(ont);
        for (const auto& dialog : corpus.dialogs) {
          order.push_back(dialog.id);
          for (const auto& ds : track_dialog(dialog, ont, tok, prep, provider))
            states.states[dialog.id].push_back(ds.assignments);
        }
      } else {
        if (track_pred.empty())
          throw std::runtime_error("track: either --pred or --oracle is required");
        const PredictionsFile preds = load_predictions(track_pred, ont);
        const PrepInfo want{preds.header.max_len, preds.header.mask_history,
                            preds.header.no_history};
        check_prep_match(corpus, want, track_corpus);
        std::map<std::string, std::vector<const TurnDecisions*>> by_dialog;
        for (const auto& t : preds.turns) by_dialog[t.dialog_id].push_back(&t);
        for (const auto& dialog : corpus.dialogs) {
          order.push_back(dialog.id);
          auto it = by_dialog.find(dialog.id);
          if (it == by_dialog.end() || it->second.size() != dialog.turns.size())
            throw std::runtime_error("track: predictions do not align with dialog '" + dialog.id +
                                     "'");
          DialogState ds;
          for (size_t t = 0; t < dialog.turns.size(); ++t) {
            const EncoderInput input =
                build_input(dialog.turns[t], history_for_turn(dialog, t, prep.no_history), tok,
                            prep.max_len, prep.mask_history);
            const PredictionBundle bundle =
                bundle_from_decisions(*it->second[t], ont, input.size());
            ds = apply_turn(ds, dialog.turns[t], bundle, input, ont);
            states.states[dialog.id].push_back(ds.assignments);
          }
        }
      }
      save_states(states, order, track_out);
      std::cout << "wrote states for " << order.size() << " dialogs to " << track_out << "\n";
      RunManifest m = base_manifest("track", argc, argv);
      m.inputs = {track_corpus, ontology_path};
      if (!track_pred.empty()) m.inputs.push_back(track_pred);
      m.outputs = {track_out};
      m.wall_time_s = timer.seconds();
      write_manifest(m, track_out);
    }

    if (*evaluate) {
      const Corpus gold = load_corpus(eval_gold, ont);
      if (!eval_gates.empty() && eval_gates.size() != eval_pred.size())
        throw std::runtime_error("evaluate: --gates count must match --pred count");
      std::vector<std::string> labels;
      if (!eval_seeds.empty()) {
        std::stringstream ss(eval_seeds);
        std::string item;
        while (std::getline(ss, item, ',')) labels.push_back("seed " + item);
        if (labels.size() != eval_pred.size())
          throw std::runtime_error("evaluate: --seeds count must match --pred count");
      }
      std::optional<std::map<std::string, std::map<std::string, int>>> train_counts;
      if (!eval_train.empty())
        train_counts = value_counts(load_corpus(eval_train, ont), ont);

      std::vector<EvalRun> runs;
      for (size_t i = 0; i < eval_pred.size(); ++i) {
        EvalRun run;
        run.label = i < labels.size() ? labels[i] : basename_of(eval_pred[i]);
        const StatesFile states = load_states(eval_pred[i], ont);
        const auto predicted = states_for_corpus(states, gold);
        run.jga = joint_goal_accuracy(predicted, gold, ont);
        run.per_slot_acc = per_slot_accuracy(predicted, gold, ont);
        if (!eval_gates.empty())
          run.gates = gate_metrics(load_predictions(eval_gates[i], ont), gold, ont);
        if (train_counts)
          run.recall_buckets = recall_by_seen_count(predicted, gold, *train_counts, ont);
        runs.push_back(std::move(run));
      }
      const EvalReport report = make_report(std::move(runs));
      const std::string json_text = report_to_json(report);
      const std::string table = report_to_table(report);
      std::cout << table;
      if (!eval_out.empty()) {
        std::ofstream out(eval_out);
        if (!out) throw std::runtime_error("cannot write report '" + eval_out + "'");
        out << json_text << "\n";
      }
      if (!eval_table.empty()) {
        std::ofstream out(eval_table);
        if (!out) throw std::runtime_error("cannot write table '" + eval_table + "'");
        out << table;
      }
      if (!eval_out.empty()) {
        RunManifest m = base_manifest("evaluate", argc, argv);
        m.inputs = eval_pred;
        m.inputs.push_back(eval_gold);
        for (const auto& g : eval_gates) m.inputs.push_back(g);
        if (!eval_train.empty()) m.inputs.push_back(eval_train);
        m.outputs = {eval_out};
        m.wall_time_s = timer.seconds();
        write_manifest(m, eval_out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
