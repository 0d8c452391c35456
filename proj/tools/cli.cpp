#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mgract/apriori.hpp"
#include "mgract/parallel.hpp"
#include "mgract/report.hpp"
#include "mgract/synth.hpp"
#include "mgract/tokens.hpp"
#include "mgract/train.hpp"
#include "run_config.hpp"

namespace mgract::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
CLI::Option* add_opt(CLI::App* app, const std::string& name, std::optional<T>& dst, const std::string& desc) {
  return app->add_option_function<T>(name, [&dst](const T& v) { dst = v; }, desc);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
  } else {
    write_file(path, text);
  }
}

bool is_pose_file(const fs::path& p) {
  const std::string name = p.filename().string();
  if (name == "manifest.csv" || name == "provenance.json") return false;
  const std::string ext = p.extension().string();
  return ext == ".json" || ext == ".csv";
}

std::vector<fs::path> pose_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && is_pose_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

NormalizedSequence prepare_sequence(const PoseSequence& pose, const RunConfig& cfg) {
  return normalize(cfg.resample ? resample(pose, *cfg.resample) : pose);
}

StreamTokens tokenize_pose(const PoseSequence& pose, const RunConfig& cfg, int threads) {
  MgrConfig mgr = cfg.mgr;
  mgr.threads = threads;
  return tokenize_sequence(prepare_sequence(pose, cfg), cfg.hse, mgr);
}

std::string streams_dump(const PoseSequence& pose, const RunConfig& cfg) {
  const NormalizedSequence seq = prepare_sequence(pose, cfg);
  return streams_dump_json(build_joint_stream(seq, cfg.hse), build_bone_stream(seq, seq.pose.topology, cfg.hse),
                           cfg.hse.alpha);
}

// Tokenizer settings recorded by the tokenize command, recovered from a
// token file's provenance block.
std::optional<json> token_provenance(const std::string& token_file) {
  try {
    const json doc = json::parse(read_file(token_file));
    if (doc.contains("provenance")) return doc.at("provenance");
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

std::string with_extra(const std::string& provenance, const char* key, const json& value) {
  json p = json::parse(provenance);
  p[key] = value;
  return p.dump();
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
  DatasetOptions opts = cfg.synth;
  if (cfg.synth_classes) opts.classes = parse_class_ranges(read_file(*cfg.synth_classes));
  const auto entries = make_dataset(opts, out_dir);
  write_file((fs::path(out_dir) / "provenance.json").string(), provenance_json(cfg, "synth"));
  out << "wrote " << entries.size() << " clips (" << opts.classes.size() << " classes) to " << out_dir << '\n';
  return 0;
}

int cmd_tokenize(const RunConfig& cfg, const std::string& input, const std::string& output, const std::string& dump,
                 std::ostream& out, std::ostream& err) {
  const std::string prov = provenance_json(cfg, "tokenize");
  if (!fs::exists(input)) throw DataError("input '" + input + "' does not exist");
  if (!fs::is_directory(input)) {
    const PoseSequence pose = load_pose_file(input, cfg.parse);
    const StreamTokens tokens = tokenize_pose(pose, cfg, cfg.threads);
    emit(output, token_file_json(tokens, prov), out);
    if (!dump.empty()) write_file(dump, streams_dump(pose, cfg));
    return 0;
  }
  if (output.empty() || output == "-") throw UsageError("--out must name a directory when --input is a directory");
  const std::vector<fs::path> files = pose_files(input);
  if (files.empty()) throw DataError("no pose files under '" + input + "'");
  parallel_for(static_cast<int>(files.size()), cfg.threads, [&](int i) {
    const fs::path& src = files[static_cast<std::size_t>(i)];
    const fs::path rel = fs::relative(src, input);
    try {
      const PoseSequence pose = load_pose_file(src.string(), cfg.parse);
      const StreamTokens tokens = tokenize_pose(pose, cfg, 1);
      fs::path dst = fs::path(output) / rel;
      dst.replace_extension(".json");
      write_file(dst.string(), token_file_json(tokens, prov));
      if (!dump.empty()) {
        fs::path d = fs::path(dump) / rel;
        d.replace_extension(".streams.json");
        write_file(d.string(), streams_dump(pose, cfg));
      }
    } catch (const std::exception& e) {
      throw DataError(src.string() + ": " + e.what());
    }
  });
  err << "tokenized " << files.size() << " sequences into " << output << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& tokens_dir, const std::string& model_out,
              const std::string& history_out, bool verbose, std::ostream& out, std::ostream& err) {
  const Dataset data = load_token_dataset(tokens_dir);
  const SplitIndices split = stratified_split(data.labels(), cfg.train.split, cfg.train.seed);
  const TrainResult result = train(data, split.train, cfg.train);
  if (verbose) {
    for (const EpochLog& e : result.history) {
      err << "epoch " << e.epoch << " lr " << e.learning_rate << " loss " << e.train_loss << " train_acc "
          << e.train_accuracy << " val_acc " << e.validation_accuracy << '\n';
    }
  }
  Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.class_names = data.class_names;
  ckpt.config = cfg.train;
  ckpt.best_epoch = result.best_epoch;
  for (std::size_t i : split.test) ckpt.test_ids.push_back(data.samples[i].id);

  std::string prov = provenance_json(cfg, "train");
  const fs::path first = fs::path(tokens_dir) / (data.samples.front().id + ".json");
  if (const auto tp = token_provenance(first.string())) prov = with_extra(prov, "tokens", *tp);
  save_checkpoint(ckpt, model_out, prov);

  if (!history_out.empty()) {
    std::ostringstream h;
    h << std::setprecision(17) << "epoch,learning_rate,train_loss,train_accuracy,validation_accuracy,validation_loss\n";
    for (const EpochLog& e : result.history) {
      h << e.epoch << ',' << e.learning_rate << ',' << e.train_loss << ',' << e.train_accuracy << ','
        << e.validation_accuracy << ',' << e.validation_loss << '\n';
    }
    write_file(history_out, h.str());
  }
  const EvalMetrics test = evaluate(result.params, data, split.test);
  out << "trained " << result.history.size() << " epochs (best " << result.best_epoch << "), test top1 "
      << test.top1 << " top5 " << test.top5 << " mean " << test.class_mean << " on " << test.count
      << " samples; checkpoint " << model_out << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path, const std::string& tokens_dir,
             const std::string& split_name, const std::string& report_out, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  const Dataset data = load_token_dataset(tokens_dir, ckpt.class_names);
  std::vector<std::size_t> idx;
  if (split_name == "all") {
    idx.resize(data.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  } else {
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      if (std::find(ckpt.test_ids.begin(), ckpt.test_ids.end(), data.samples[i].id) != ckpt.test_ids.end()) {
        idx.push_back(i);
      }
    }
    if (idx.empty()) throw DataError("none of the checkpoint's test samples were found under '" + tokens_dir + "'");
  }
  const EvalMetrics m = evaluate(ckpt.params, data, idx);
  json doc = json::parse(metrics_json(m, ckpt.class_names));
  doc["split"] = split_name;
  doc["model"] = model_path;
  doc["provenance"] = json::parse(provenance_json(cfg, "eval"));
  emit(report_out, doc.dump(2), out);
  return 0;
}

// Applies the tokenizer settings stored with a checkpoint unless the user
// set them explicitly.
void adopt_tokenizer(RunConfig& cfg, const std::string& model_text, bool alpha_set, bool k_set, bool resample_set) {
  const json doc = json::parse(model_text);
  if (!doc.contains("provenance") || !doc["provenance"].contains("tokens")) return;
  const json& tp = doc["provenance"]["tokens"];
  if (!tp.contains("config") || !tp["config"].contains("tokenize")) return;
  json tok = tp["config"]["tokenize"];
  if (alpha_set) tok.erase("alpha");
  if (k_set) tok.erase("k");
  if (k_set) tok.erase("select_k");
  if (resample_set) tok.erase("resample");
  apply_json(cfg, json{{"tokenize", tok}});
}

int cmd_report(const RunConfig& cfg, const std::string& input, const std::string& model_path, const std::string& fmt,
               const std::string& out_path, std::ostream& out) {
  const PoseSequence pose = load_pose_file(input, cfg.parse);
  const KinematicMetrics metrics = extract_metrics(normalize(pose), cfg.cm_per_unit);
  std::optional<LabelPrediction> prediction;
  if (!model_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(model_path);
    const StreamTokens tokens = tokenize_pose(pose, cfg, cfg.threads);
    const Eigen::RowVectorXd p = softmax(forward(ckpt.params, tokens.joint, tokens.bone));
    LabelPrediction pred;
    std::vector<int> order(static_cast<std::size_t>(p.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(a) > p(b); });
    pred.primary = ckpt.class_names[static_cast<std::size_t>(order.front())];
    for (int c : order) {
      const auto& name = ckpt.class_names[static_cast<std::size_t>(c)];
      pred.probabilities.emplace_back(name, p(c));
      if (c != order.front() && p(c) >= 0.1) pred.secondary.emplace_back(name, p(c));
    }
    prediction = std::move(pred);
  }
  const EvaluationReport report =
      build_report(metrics, load_bin_table(cfg.bins_path), load_rule_table(cfg.rules_path), std::move(prediction));
  const bool text = fmt == "text" || (fmt.empty() && fs::path(out_path).extension() == ".txt");
  emit(out_path, text ? report_text(report) : report_json(report, provenance_json(cfg, "report")), out);
  return 0;
}

int cmd_mine(const RunConfig& cfg, const std::string& labels_path, const std::string& out_path, std::ostream& out) {
  const auto txns = parse_transactions(read_file(labels_path));
  if (txns.empty()) throw DataError("no transactions in '" + labels_path + "'");
  const auto rules = mine_associations(txns, cfg.min_support, cfg.min_confidence);
  emit(out_path, rules_json(rules, cfg.min_support, cfg.min_confidence, provenance_json(cfg, "mine")), out);
  return 0;
}

int cmd_inspect(const RunConfig& cfg, const std::string& tokens_path, const std::string& input,
                const std::string& csv_path, std::ostream& out) {
  StreamTokens tokens;
  std::vector<std::string> names;
  if (!tokens_path.empty()) {
    tokens = load_token_file(tokens_path);
  } else {
    const PoseSequence pose = load_pose_file(input, cfg.parse);
    tokens = tokenize_pose(pose, cfg, cfg.threads);
    names = pose.topology.joint_names;
  }
  if (names.empty() && tokens.joint.entities() == coco17().size()) names = coco17().joint_names;
  auto entity_name = [&](int e) {
    return e < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(e)] : std::to_string(e);
  };
  std::ostringstream csv;
  csv << std::setprecision(17)
      << "stream,entity,name,component,weight,mu0,mu1,mu2,s0,s1,s2,qw,qx,qy,qz\n";
  out << std::fixed << std::setprecision(4);
  out << "alpha " << tokens.alpha << "  k " << tokens.k << "  entities " << tokens.joint.entities() << '\n';
  for (const auto& [stream, tensor, weights] :
       {std::tuple{"joint", &tokens.joint, &tokens.joint_weights}, std::tuple{"bone", &tokens.bone, &tokens.bone_weights}}) {
    out << "\n[" << stream << "]\n";
    out << std::left << std::setw(16) << "entity" << std::right << std::setw(3) << "k" << std::setw(8) << "pi"
        << "  mu                          s                           q\n";
    for (int e = 0; e < tensor->entities(); ++e) {
      for (int k = 0; k < tensor->components(); ++k) {
        const ActionToken t = tensor->token(e, k);
        const double w = weights->size() ? (*weights)(e, k) : 0.0;
        out << std::left << std::setw(16) << (k == 0 ? entity_name(e) : "") << std::right << std::setw(3) << k
            << std::setw(8) << w << "  ";
        for (int d = 0; d < 3; ++d) out << std::setw(9) << t.mu(d) << ' ';
        out << ' ';
        for (int d = 0; d < 3; ++d) out << std::setw(9) << t.scale(d) << ' ';
        out << ' ';
        for (int d = 0; d < 4; ++d) out << std::setw(8) << t.quat(d) << ' ';
        out << '\n';
        csv << stream << ',' << e << ',' << entity_name(e) << ',' << k << ',' << w;
        for (int d = 0; d < 3; ++d) csv << ',' << t.mu(d);
        for (int d = 0; d < 3; ++d) csv << ',' << t.scale(d);
        for (int d = 0; d < 4; ++d) csv << ',' << t.quat(d);
        csv << '\n';
      }
    }
  }
  if (!csv_path.empty()) write_file(csv_path, csv.str());
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian action tokens for rapid skeleton actions", "mgr-act"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON or TOML config file (flags override it)");
  add_opt(&app, "--threads", threads, "worker threads (capped by MGR_ACT_THREADS)");
  app.fallthrough();

  // Shared tokenizer flags.
  std::optional<int> k;
  std::optional<double> alpha, confidence;
  std::optional<std::string> select_k;
  std::optional<int> resample;
  bool no_unwrap = false;
  std::vector<CLI::Option*> alpha_opts, k_opts, resample_opts;
  auto tokenizer_flags = [&](CLI::App* s) {
    k_opts.push_back(add_opt(s, "--k", k, "components per entity"));
    alpha_opts.push_back(add_opt(s, "--alpha", alpha, "time-axis scale factor"));
    k_opts.push_back(add_opt(s, "--select-k", select_k, "BIC selection over a range, e.g. 2..10"));
    resample_opts.push_back(add_opt(s, "--resample", resample, "resample clips to this many frames"));
    add_opt(s, "--confidence-threshold", confidence, "keypoints below this confidence are repaired");
    s->add_flag("--no-unwrap", no_unwrap, "keep bone angles wrapped to (-pi, pi]");
  };

  std::string input, output, dump, tokens_dir, model, history, report_out, split_name = "test", fmt, labels, csv,
      tokens_file;
  bool verbose = false;

  // synth
  std::optional<int> per_class;
  std::optional<double> noise, duration, fps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> classes;
  auto* synth = app.add_subcommand("synth", "generate a labelled synthetic compression dataset");
  add_opt(synth, "--per-class", per_class, "clips per class");
  add_opt(synth, "--noise", noise, "keypoint noise sigma (normalised units)");
  add_opt(synth, "--seed", seed, "master seed");
  add_opt(synth, "--duration", duration, "clip length in seconds");
  add_opt(synth, "--fps", fps, "frames per second");
  add_opt(synth, "--classes", classes, "JSON file of per-class parameter ranges");
  synth->add_option("--out", output, "output directory")->required();

  auto* tokenize = app.add_subcommand("tokenize", "fit Gaussian action tokens to pose files");
  tokenize->add_option("--input", input, "pose file or directory")->required();
  tokenize->add_option("--out", output, "token file or directory (stdout when omitted for a file)");
  tokenize->add_option("--dump-streams", dump, "also write the raw stream point sets here");
  tokenizer_flags(tokenize);

  // train
  std::optional<std::string> loss, fusion;
  std::optional<double> mixup_alpha, smoothing, lr, split_share, weight_decay;
  std::optional<int> epochs, patience, batch, d_tok, d_mix, heads, model_dim;
  auto* trn = app.add_subcommand("train", "train the token classifier");
  trn->add_option("--tokens-dir", tokens_dir, "directory of labelled token files")->required();
  trn->add_option("--out", model, "checkpoint path")->required();
  add_opt(trn, "--loss", loss, "mixup | label_smoothing | cross_entropy");
  add_opt(trn, "--mixup-alpha", mixup_alpha, "Beta(a, a) parameter for MixUp");
  add_opt(trn, "--smoothing", smoothing, "label smoothing epsilon");
  add_opt(trn, "--seed", seed, "training seed");
  add_opt(trn, "--lr", lr, "initial learning rate");
  add_opt(trn, "--weight-decay", weight_decay, "L2 weight decay");
  add_opt(trn, "--epochs", epochs, "maximum epochs");
  add_opt(trn, "--patience", patience, "early-stopping patience in epochs");
  add_opt(trn, "--batch-size", batch, "mini-batch size");
  add_opt(trn, "--split", split_share, "train share of the train/test partition");
  add_opt(trn, "--fusion", fusion, "interleave | concat | xattn");
  add_opt(trn, "--heads", heads, "cross-attention heads");
  add_opt(trn, "--model-dim", model_dim, "cross-attention width");
  add_opt(trn, "--d-tok", d_tok, "token encoder width");
  add_opt(trn, "--d-mix", d_mix, "entity mixer width");
  trn->add_option("--history", history, "write per-epoch log as CSV");
  trn->add_flag("--verbose", verbose, "print per-epoch progress");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on token files");
  evl->add_option("--model", model, "checkpoint path")->required();
  evl->add_option("--tokens-dir", tokens_dir, "directory of labelled token files")->required();
  evl->add_option("--split", split_name, "test (held-out ids stored in the checkpoint) | all")
      ->check(CLI::IsMember({"test", "all"}));
  evl->add_option("--report", report_out, "metrics JSON path (stdout when omitted)");

  std::optional<double> cm_per_unit;
  std::optional<std::string> bins, rules;
  auto* rep = app.add_subcommand("report", "kinematic evaluation report for one pose file");
  rep->add_option("--input", input, "pose file")->required();
  rep->add_option("--model", model, "checkpoint for predicted labels");
  add_opt(rep, "--cm-per-unit", cm_per_unit, "calibration from normalised units to cm");
  add_opt(rep, "--bins", bins, "quantisation bin table");
  add_opt(rep, "--rules", rules, "rule table");
  rep->add_option("--format", fmt, "json | text")->check(CLI::IsMember({"json", "text"}));
  rep->add_option("--out", report_out, "output path (stdout when omitted)");
  tokenizer_flags(rep);

  std::optional<double> min_support, min_confidence;
  auto* mine = app.add_subcommand("mine", "association rules over label sets");
  mine->add_option("--labels", labels, "one transaction per line, labels separated by ',' or ';'")->required();
  add_opt(mine, "--min-support", min_support, "minimum support");
  add_opt(mine, "--min-confidence", min_confidence, "minimum confidence");
  mine->add_option("--out", report_out, "output path (stdout when omitted)");

  auto* ins = app.add_subcommand("inspect", "print per-entity token tables");
  ins->add_option("--tokens", tokens_file, "token file");
  ins->add_option("--input", input, "pose file to tokenize on the fly");
  ins->add_option("--csv", csv, "also write the table as CSV");
  tokenizer_flags(ins);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    const auto parsed = app.get_subcommands();
    err << "mgr-act: " << e.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.back()->help());
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_json(cfg, load_config_file(config_path));
    if (threads) cfg.threads = std::clamp(*threads, 1, default_threads());

    if (name == "report" && !model.empty()) {
      auto given = [](const std::vector<CLI::Option*>& opts) {
        return std::any_of(opts.begin(), opts.end(), [](const CLI::Option* o) { return o->count() > 0; });
      };
      std::string text;
      try {
        text = read_file(model);
      } catch (const DataError&) {
      }
      if (!text.empty()) {
        try {
          adopt_tokenizer(cfg, text, given(alpha_opts), given(k_opts), given(resample_opts));
        } catch (const json::exception&) {
        }
      }
    }
    try {
      if (k) {
        cfg.mgr.k = *k;
        cfg.mgr.k_range.reset();
      }
      if (select_k) cfg.mgr.k_range = parse_k_range(*select_k);
      if (alpha) cfg.hse.alpha = *alpha;
      if (resample) cfg.resample = *resample;
      if (confidence) cfg.parse.confidence_threshold = *confidence;
      if (no_unwrap) cfg.hse.unwrap_angles = false;

      if (per_class) cfg.synth.per_class = *per_class;
      if (noise) cfg.synth.noise_sigma = *noise;
      if (duration) cfg.synth.duration_s = *duration;
      if (fps) cfg.synth.fps = *fps;
      if (classes) cfg.synth_classes = *classes;
      if (seed) (name == "synth" ? cfg.synth.seed : cfg.train.seed) = *seed;

      if (loss) cfg.train.loss = parse_loss_kind(*loss);
      if (fusion) cfg.train.fusion = parse_fusion_strategy(*fusion);
      if (mixup_alpha) cfg.train.mixup_alpha = *mixup_alpha;
      if (smoothing) cfg.train.smoothing = *smoothing;
      if (lr) cfg.train.learning_rate = *lr;
      if (weight_decay) cfg.train.weight_decay = *weight_decay;
      if (epochs) cfg.train.max_epochs = *epochs;
      if (patience) cfg.train.patience = *patience;
      if (batch) cfg.train.batch_size = *batch;
      if (split_share) cfg.train.split = *split_share;
      if (heads) cfg.train.heads = *heads;
      if (model_dim) cfg.train.model_dim = *model_dim;
      if (d_tok) cfg.train.d_tok = *d_tok;
      if (d_mix) cfg.train.d_mix = *d_mix;

      if (cm_per_unit) cfg.cm_per_unit = *cm_per_unit;
      if (bins) cfg.bins_path = *bins;
      if (rules) cfg.rules_path = *rules;
      if (min_support) cfg.min_support = *min_support;
      if (min_confidence) cfg.min_confidence = *min_confidence;
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    cfg.validate();

    if (name == "synth") return cmd_synth(cfg, output, out);
    if (name == "tokenize") return cmd_tokenize(cfg, input, output, dump, out, err);
    if (name == "train") return cmd_train(cfg, tokens_dir, model, history, verbose, out, err);
    if (name == "eval") return cmd_eval(cfg, model, tokens_dir, split_name, report_out, out);
    if (name == "report") return cmd_report(cfg, input, model, fmt, report_out, out);
    if (name == "mine") return cmd_mine(cfg, labels, report_out, out);
    if (name == "inspect") {
      if (tokens_file.empty() == input.empty()) throw UsageError("inspect needs exactly one of --tokens or --input");
      return cmd_inspect(cfg, tokens_file, input, csv, out);
    }
    throw UsageError("unknown command '" + name + "'");
  } catch (const UsageError& e) {
    err << "mgr-act " << name << ": " << e.what() << "\n\n" << sub->help();
    return 2;
  } catch (const std::exception& e) {
    err << "mgr-act " << name << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mgract::cli
