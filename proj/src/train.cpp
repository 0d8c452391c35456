#include "mgract/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mgract {

using nlohmann::json;

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

void TrainConfig::validate() const {
  if (!(mixup_alpha > 0.0)) throw ModelError("mixup_alpha must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ModelError("smoothing must lie in [0,1)");
  if (!(learning_rate > 0.0)) throw ModelError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ModelError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ModelError("weight decay must be non-negative");
  if (batch_size < 1) throw ModelError("batch size must be positive");
  if (max_epochs < 1) throw ModelError("max_epochs must be positive");
  if (patience < 1) throw ModelError("patience must be positive");
  if (!(split > 0.0 && split < 1.0)) throw ModelError("split must lie in (0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ModelError("validation fraction must lie in [0,1)");
  }
  if (d_tok < 1 || d_mix < 1) throw ModelError("hidden widths must be positive");
  if (fusion == FusionStrategy::CrossAttention) FusionConfig{fusion, heads, model_dim}.validate();
}

SplitIndices stratified_split(const std::vector<int>& labels, double share, std::uint64_t seed) {
  if (!(share > 0.0 && share < 1.0)) throw ModelError("split share must lie in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    auto keep = static_cast<std::size_t>(std::llround(share * static_cast<double>(n)));
    if (n >= 2) keep = std::clamp<std::size_t>(keep, 1, n - 1);
    else keep = n;
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

double sample_beta(double a, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(a, 1.0);
  const double x = g(rng);
  const double y = g(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

InputNormalizer fit_normalizer(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ModelError("cannot fit normaliser on an empty set");
  const LabeledSample& first = data.samples.at(indices.front());
  const Eigen::Index rows = static_cast<Eigen::Index>(first.joint.entities()) * first.joint.components();
  InputNormalizer nz;
  auto fit = [&](bool bone, Eigen::MatrixXd& mean, Eigen::MatrixXd& scale) {
    mean = Eigen::MatrixXd::Zero(rows, kTokenWidth);
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(rows, kTokenWidth);
    for (std::size_t i : indices) {
      const TokenTensor& t = bone ? data.samples[i].bone : data.samples[i].joint;
      if (t.entities() * t.components() != rows) throw ModelError("token tensors differ in shape across samples");
      mean += t.rows();
    }
    const double n = static_cast<double>(indices.size());
    mean /= n;
    for (std::size_t i : indices) {
      const TokenTensor& t = bone ? data.samples[i].bone : data.samples[i].joint;
      sq += (t.rows() - mean).array().square().matrix();
    }
    scale = (sq / n).array().sqrt().max(1e-8).matrix();
  };
  fit(false, nz.joint_mean, nz.joint_scale);
  fit(true, nz.bone_mean, nz.bone_scale);
  return nz;
}

namespace {

std::vector<Eigen::MatrixXd*> tensor_list(ClassifierParams& p) {
  std::vector<Eigen::MatrixXd*> out;
  p.for_each_tensor([&](const char*, Eigen::MatrixXd& m) { out.push_back(&m); });
  return out;
}

int argmax(const Eigen::RowVectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

struct ValidationScore {
  double accuracy = 0;
  double loss = 0;
};

ValidationScore score(const ClassifierParams& params, const std::vector<ModelInput>& inputs,
                      const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  ValidationScore s;
  if (idx.empty()) return s;
  for (std::size_t i : idx) {
    const Eigen::RowVectorXd logits = forward(params, inputs[i]);
    s.loss += soft_cross_entropy(logits, one_hot(labels[i], params.shape.classes));
    if (argmax(logits) == labels[i]) s.accuracy += 1.0;
  }
  s.accuracy /= static_cast<double>(idx.size());
  s.loss /= static_cast<double>(idx.size());
  return s;
}

}  // namespace

TrainResult train(const Dataset& data, const std::vector<std::size_t>& train_indices, const TrainConfig& cfg) {
  cfg.validate();
  const int classes = data.num_classes();
  if (classes < 2) throw ModelError("degenerate dataset: need at least 2 classes");
  if (train_indices.empty()) throw ModelError("degenerate dataset: empty training set");
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (std::size_t i : train_indices) {
    const int y = data.samples.at(i).label;
    if (y < 0 || y >= classes) throw ModelError("sample label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw ModelError("degenerate dataset: class '" + data.class_names[static_cast<std::size_t>(c)] +
                       "' has fewer than 2 training samples");
    }
  }

  const std::vector<int> labels = data.labels();
  TrainResult result;
  if (cfg.validation_fraction > 0.0) {
    std::vector<int> sub;
    for (std::size_t i : train_indices) sub.push_back(labels[i]);
    const SplitIndices inner = stratified_split(sub, 1.0 - cfg.validation_fraction, cfg.seed ^ 0x5eedULL);
    for (std::size_t j : inner.train) result.train_indices.push_back(train_indices[j]);
    for (std::size_t j : inner.test) result.validation_indices.push_back(train_indices[j]);
  } else {
    result.train_indices = train_indices;
    result.validation_indices = train_indices;
  }

  const LabeledSample& first = data.samples[train_indices.front()];
  ClassifierShape shape;
  shape.fusion = cfg.fusion;
  shape.entities = first.joint.entities();
  shape.components = first.joint.components();
  shape.classes = classes;
  shape.d_tok = cfg.d_tok;
  shape.d_mix = cfg.d_mix;
  shape.heads = cfg.heads;
  shape.model_dim = cfg.model_dim;

  std::mt19937_64 rng(cfg.seed);
  ClassifierParams params = ClassifierParams::random(shape, cfg.seed);
  params.normalizer = fit_normalizer(data, result.train_indices);

  std::vector<ModelInput> inputs(data.samples.size());
  std::vector<bool> needed(data.samples.size(), false);
  for (std::size_t i : result.train_indices) needed[i] = true;
  for (std::size_t i : result.validation_indices) needed[i] = true;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    if (needed[i]) inputs[i] = prepare_input(params, data.samples[i].joint, data.samples[i].bone);
  }

  ClassifierParams velocity = ClassifierParams::zeros(shape);
  const std::vector<Eigen::MatrixXd*> p_list = tensor_list(params);
  const std::vector<Eigen::MatrixXd*> v_list = tensor_list(velocity);
  const LossConfig loss_cfg{cfg.loss, cfg.loss == LossKind::LabelSmoothing ? cfg.smoothing : 0.0};

  ClassifierParams best = params;
  ValidationScore best_score{-1.0, 0.0};
  int since_best = 0;
  std::vector<std::size_t> order = result.train_indices;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.learning_rate * 0.5 *
                      (1.0 + std::cos(kPi * static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    double correct = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<LossExample> batch;
      batch.reserve(end - start);
      std::vector<std::size_t> partner(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(end));
      if (cfg.loss == LossKind::MixUp) std::shuffle(partner.begin(), partner.end(), rng);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        LossExample ex;
        ex.label_a = labels[i];
        if (cfg.loss == LossKind::MixUp) {
          const std::size_t j = partner[b - start];
          const double lambda = sample_beta(cfg.mixup_alpha, rng);
          const Mixed mixed = mixup_batch(inputs[i], one_hot(labels[i], classes), inputs[j],
                                          one_hot(labels[j], classes), lambda);
          ex.input = mixed.input;
          ex.label_b = labels[j];
          ex.lambda = lambda;
        } else {
          ex.input = inputs[i];
        }
        batch.push_back(std::move(ex));
      }
      LossResult lr_out = loss_and_gradients(params, batch, loss_cfg);
      epoch_loss += lr_out.loss * static_cast<double>(batch.size());
      for (const LossExample& ex : batch) {
        const int dominant = ex.lambda >= 0.5 ? ex.label_a : ex.label_b;
        if (argmax(forward(params, ex.input)) == dominant) correct += 1.0;
      }
      const std::vector<Eigen::MatrixXd*> g_list = tensor_list(lr_out.grad);
      for (std::size_t t = 0; t < p_list.size(); ++t) {
        Eigen::MatrixXd& p = *p_list[t];
        Eigen::MatrixXd& v = *v_list[t];
        v = cfg.momentum * v + *g_list[t] + cfg.weight_decay * p;
        p -= lr * v;
      }
    }
    const ValidationScore val = score(params, inputs, labels, result.validation_indices);
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    log.train_loss = epoch_loss / static_cast<double>(order.size());
    log.train_accuracy = correct / static_cast<double>(order.size());
    log.validation_accuracy = val.accuracy;
    log.validation_loss = val.loss;
    result.history.push_back(log);

    const bool improved = val.accuracy > best_score.accuracy ||
                          (val.accuracy == best_score.accuracy && val.loss < best_score.loss);
    if (improved) {
      best_score = val;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

EvalMetrics metrics_from_logits(const Eigen::MatrixXd& logits, const std::vector<int>& labels, int classes) {
  if (labels.empty()) throw ModelError("empty dataset");
  if (logits.rows() != static_cast<Eigen::Index>(labels.size()) || logits.cols() != classes) {
    throw ModelError("logit matrix does not match labels");
  }
  EvalMetrics m;
  m.count = labels.size();
  m.confusion = Eigen::MatrixXi::Zero(classes, classes);
  const int k5 = std::min(5, classes);
  double hit1 = 0, hit5 = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto row = logits.row(static_cast<Eigen::Index>(n));
    const int y = labels[n];
    if (y < 0 || y >= classes) throw ModelError("label out of range");
    int rank = 0;
    for (int c = 0; c < classes; ++c) {
      if (row(c) > row(y) || (row(c) == row(y) && c < y)) ++rank;
    }
    int pred = 0;
    for (int c = 1; c < classes; ++c) {
      if (row(c) > row(pred)) pred = c;
    }
    ++m.confusion(y, pred);
    if (rank == 0) hit1 += 1;
    if (rank < k5) hit5 += 1;
  }
  const double total = static_cast<double>(labels.size());
  m.top1 = hit1 / total;
  m.top5 = hit5 / total;
  double recall_sum = 0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    const int support = m.confusion.row(c).sum();
    if (support == 0) continue;
    recall_sum += static_cast<double>(m.confusion(c, c)) / support;
    ++present;
  }
  m.class_mean = present > 0 ? recall_sum / present : 0.0;
  return m;
}

EvalMetrics evaluate(const ClassifierParams& params, const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ModelError("empty dataset");
  Eigen::MatrixXd logits(static_cast<Eigen::Index>(indices.size()), params.shape.classes);
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const LabeledSample& s = data.samples.at(indices[n]);
    logits.row(static_cast<Eigen::Index>(n)) = forward(params, s.joint, s.bone);
    labels.push_back(s.label);
  }
  return metrics_from_logits(logits, labels, params.shape.classes);
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw ModelError("checkpoint tensor '" + name + "' has inconsistent size");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  }
  return m;
}

json config_to_json(const TrainConfig& c) {
  return {{"loss", to_string(c.loss)},
          {"mixup_alpha", c.mixup_alpha},
          {"smoothing", c.smoothing},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"split", c.split},
          {"validation_fraction", c.validation_fraction},
          {"fusion", to_string(c.fusion)},
          {"d_tok", c.d_tok},
          {"d_mix", c.d_mix},
          {"heads", c.heads},
          {"model_dim", c.model_dim}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.loss = parse_loss_kind(j.value("loss", to_string(c.loss)));
  c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
  c.smoothing = j.value("smoothing", c.smoothing);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.split = j.value("split", c.split);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.fusion = parse_fusion_strategy(j.value("fusion", to_string(c.fusion)));
  c.d_tok = j.value("d_tok", c.d_tok);
  c.d_mix = j.value("d_mix", c.d_mix);
  c.heads = j.value("heads", c.heads);
  c.model_dim = j.value("model_dim", c.model_dim);
  return c;
}

}  // namespace

std::string train_config_json(const TrainConfig& cfg) { return config_to_json(cfg).dump(); }

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed training config: ") + e.what());
  }
}

std::string checkpoint_json(const Checkpoint& ckpt, const std::string& provenance_json) {
  const ClassifierShape& s = ckpt.params.shape;
  json doc;
  doc["version"] = 1;
  doc["format"] = "mgract-classifier";
  doc["shape"] = {{"fusion", to_string(s.fusion)}, {"entities", s.entities}, {"components", s.components},
                  {"classes", s.classes},          {"d_tok", s.d_tok},       {"d_mix", s.d_mix},
                  {"heads", s.heads},              {"model_dim", s.model_dim}};
  doc["class_names"] = ckpt.class_names;
  doc["config"] = config_to_json(ckpt.config);
  doc["seed"] = ckpt.config.seed;
  doc["best_epoch"] = ckpt.best_epoch;
  doc["test_ids"] = ckpt.test_ids;
  json tensors = json::object();
  ckpt.params.for_each_tensor([&](const char* name, const Eigen::MatrixXd& m) { tensors[name] = matrix_to_json(m); });
  doc["tensors"] = tensors;
  const InputNormalizer& nz = ckpt.params.normalizer;
  if (!nz.empty()) {
    doc["normalizer"] = {{"joint_mean", matrix_to_json(nz.joint_mean)},
                         {"joint_scale", matrix_to_json(nz.joint_scale)},
                         {"bone_mean", matrix_to_json(nz.bone_mean)},
                         {"bone_scale", matrix_to_json(nz.bone_scale)}};
  }
  if (!provenance_json.empty()) doc["provenance"] = json::parse(provenance_json);
  return doc.dump();
}

Checkpoint parse_checkpoint(const std::string& text) {
  Checkpoint ckpt;
  try {
    const json doc = json::parse(text);
    if (doc.value("version", 0) != 1 || doc.value("format", "") != "mgract-classifier") {
      throw ModelError("not a version-1 classifier checkpoint");
    }
    const json& sj = doc.at("shape");
    ClassifierShape s;
    s.fusion = parse_fusion_strategy(sj.at("fusion").get<std::string>());
    s.entities = sj.at("entities").get<int>();
    s.components = sj.at("components").get<int>();
    s.classes = sj.at("classes").get<int>();
    s.d_tok = sj.at("d_tok").get<int>();
    s.d_mix = sj.at("d_mix").get<int>();
    s.heads = sj.at("heads").get<int>();
    s.model_dim = sj.at("model_dim").get<int>();
    ckpt.params = ClassifierParams::zeros(s);
    const json& tensors = doc.at("tensors");
    ckpt.params.for_each_tensor([&](const char* name, Eigen::MatrixXd& m) {
      if (!tensors.contains(name)) throw ModelError(std::string("checkpoint is missing tensor '") + name + "'");
      m = matrix_from_json(tensors.at(name), name);
    });
    if (doc.contains("normalizer")) {
      const json& nj = doc.at("normalizer");
      InputNormalizer& nz = ckpt.params.normalizer;
      nz.joint_mean = matrix_from_json(nj.at("joint_mean"), "joint_mean");
      nz.joint_scale = matrix_from_json(nj.at("joint_scale"), "joint_scale");
      nz.bone_mean = matrix_from_json(nj.at("bone_mean"), "bone_mean");
      nz.bone_scale = matrix_from_json(nj.at("bone_scale"), "bone_scale");
    }
    ckpt.params.validate();
    ckpt.class_names = doc.at("class_names").get<std::vector<std::string>>();
    if (static_cast<int>(ckpt.class_names.size()) != s.classes) {
      throw ModelError("checkpoint class names do not match class count");
    }
    ckpt.config = config_from_json(doc.value("config", json::object()));
    ckpt.test_ids = doc.value("test_ids", std::vector<std::string>{});
    ckpt.best_epoch = doc.value("best_epoch", 0);
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed checkpoint: ") + e.what());
  } catch (const FusionError& e) {
    throw ModelError(std::string("malformed checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path, const std::string& provenance_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(ckpt, provenance_json);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

std::string metrics_json(const EvalMetrics& m, const std::vector<std::string>& class_names) {
  json doc;
  doc["top1"] = m.top1;
  doc["top5"] = m.top5;
  doc["mean"] = m.class_mean;
  doc["count"] = m.count;
  doc["classes"] = class_names;
  json conf = json::array();
  json recall = json::object();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row.push_back(m.confusion(r, c));
    conf.push_back(row);
    const int support = m.confusion.row(r).sum();
    if (support > 0 && static_cast<std::size_t>(r) < class_names.size()) {
      recall[class_names[static_cast<std::size_t>(r)]] = static_cast<double>(m.confusion(r, r)) / support;
    }
  }
  doc["confusion"] = conf;
  doc["recall"] = recall;
  return doc.dump();
}

Dataset load_token_dataset(const std::string& dir, const std::vector<std::string>& class_names) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ModelError("token directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, StreamTokens>> loaded;
  std::set<std::string> seen;
  for (const fs::path& f : files) {
    StreamTokens t = load_token_file(f.string());
    if (!t.label) throw ModelError("token file '" + f.string() + "' has no label");
    seen.insert(*t.label);
    loaded.emplace_back(fs::relative(f, dir).replace_extension().generic_string(), std::move(t));
  }
  if (loaded.empty()) throw ModelError("no token files under '" + dir + "'");
  Dataset data;
  data.class_names = class_names.empty() ? std::vector<std::string>(seen.begin(), seen.end()) : class_names;
  for (auto& [id, t] : loaded) {
    const auto it = std::find(data.class_names.begin(), data.class_names.end(), *t.label);
    if (it == data.class_names.end()) throw ModelError("label '" + *t.label + "' is not a known class");
    if (!data.samples.empty() && !data.samples.front().joint.same_shape(t.joint)) {
      throw ModelError("token file '" + id + "' differs in shape from the rest of the dataset");
    }
    data.samples.push_back({id, std::move(t.joint), std::move(t.bone), static_cast<int>(it - data.class_names.begin())});
  }
  return data;
}

}  // namespace mgract
