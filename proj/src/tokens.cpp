#include "mgract/tokens.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mgract/parallel.hpp"

namespace mgract {

using nlohmann::json;

Eigen::Matrix<double, kTokenWidth, 1> ActionToken::packed() const {
  Eigen::Matrix<double, kTokenWidth, 1> v;
  v << mu, scale, quat;
  return v;
}

ActionToken ActionToken::unpack(std::span<const double> values) {
  if (values.size() != kTokenWidth) throw TokenizeError("token must have 10 values");
  ActionToken t;
  t.mu = Vector3d(values[0], values[1], values[2]);
  t.scale = Vector3d(values[3], values[4], values[5]);
  t.quat = Vector4d(values[6], values[7], values[8], values[9]);
  return t;
}

TokenTensor::TokenTensor(int entities, int components)
    : entities_(entities),
      components_(components),
      values_(static_cast<std::size_t>(entities) * components * kTokenWidth, 0.0) {
  if (entities < 0 || components < 0) throw TokenizeError("negative tensor dimension");
}

void TokenTensor::set_token(int e, int k, const ActionToken& token) {
  const auto v = token.packed();
  for (int f = 0; f < kTokenWidth; ++f) (*this)(e, k, f) = v(f);
}

ActionToken TokenTensor::token(int e, int k) const {
  return ActionToken::unpack(std::span<const double>(values_).subspan(index(e, k, 0), kTokenWidth));
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, kTokenWidth, Eigen::RowMajor>> TokenTensor::rows() const {
  return {values_.data(), static_cast<Eigen::Index>(entities_) * components_, kTokenWidth};
}

namespace {

std::vector<int> token_order(const GmmModel<double>& model) {
  std::vector<int> order(static_cast<std::size_t>(model.k()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Vector3d& ma = model.components[a].mean;
    const Vector3d& mb = model.components[b].mean;
    if (ma(2) != mb(2)) return ma(2) < mb(2);
    if (ma(0) != mb(0)) return ma(0) < mb(0);
    return ma(1) < mb(1);
  });
  return order;
}

struct EntityFit {
  std::vector<ActionToken> tokens;
  std::vector<double> weights;
  int selected_k = 0;
};

EntityFit fit_entity(const StreamPointSet& set, const MgrConfig& mgr, std::optional<int> fixed_k) {
  EntityFit out;
  GmmModel<double> model;
  if (fixed_k) {
    MgrConfig cfg = mgr;
    cfg.k = *fixed_k;
    model = fit_gmm(set.points, cfg);
  } else if (mgr.k_range) {
    KSelection<double> sel = select_k(set.points, *mgr.k_range, mgr);
    model = std::move(sel.model);
  } else {
    model = fit_gmm(set.points, mgr);
  }
  out.selected_k = model.k();
  out.tokens = tokens_from_gmm(model);
  out.weights = weights_in_token_order(model);
  return out;
}

}  // namespace

std::vector<ActionToken> tokens_from_gmm(const GmmModel<double>& model) {
  std::vector<ActionToken> out;
  out.reserve(static_cast<std::size_t>(model.k()));
  for (int c : token_order(model)) {
    const auto& comp = model.components[c];
    const ScaleRotation<double> sr = decompose_covariance<double>(comp.covariance);
    out.push_back({comp.mean, sr.scale, sr.quat});
  }
  return out;
}

std::vector<double> weights_in_token_order(const GmmModel<double>& model) {
  std::vector<double> out;
  for (int c : token_order(model)) out.push_back(model.components[c].weight);
  return out;
}

StreamTokens tokenize_sequence(const NormalizedSequence& seq, const HseConfig& hse, const MgrConfig& mgr) {
  hse.validate();
  mgr.validate();
  const std::vector<StreamPointSet> joints = build_joint_stream(seq, hse);
  const std::vector<StreamPointSet> bones = build_bone_stream(seq, seq.pose.topology, hse);
  const int m = static_cast<int>(joints.size());
  std::vector<const StreamPointSet*> sets;
  for (const auto& s : joints) sets.push_back(&s);
  for (const auto& s : bones) sets.push_back(&s);
  const int n = static_cast<int>(sets.size());

  std::vector<EntityFit> fits(static_cast<std::size_t>(n));
  auto run = [&](std::optional<int> fixed_k) {
    parallel_for(n, mgr.threads, [&](int i) {
      try {
        fits[i] = fit_entity(*sets[i], mgr, fixed_k);
      } catch (const std::exception& e) {
        throw TokenizeError("fit failed for " + to_string(sets[i]->kind) + " stream entity " +
                            std::to_string(sets[i]->entity) + " (" + seq.pose.topology.joint_names[sets[i]->entity] +
                            "): " + e.what());
      }
    });
  };
  run(std::nullopt);

  int k = mgr.k;
  if (mgr.k_range) {
    k = 0;
    for (const auto& f : fits) k = std::max(k, f.selected_k);
    bool uniform = std::all_of(fits.begin(), fits.end(), [&](const EntityFit& f) { return f.selected_k == k; });
    if (!uniform) run(k);
  }

  StreamTokens out;
  out.alpha = hse.alpha;
  out.k = k;
  out.label = seq.pose.label;
  out.joint = TokenTensor(m, k);
  out.bone = TokenTensor(m, k);
  out.joint_weights.resize(m, k);
  out.bone_weights.resize(m, k);
  for (int i = 0; i < n; ++i) {
    const bool is_joint = i < m;
    const int e = is_joint ? i : i - m;
    TokenTensor& tensor = is_joint ? out.joint : out.bone;
    Eigen::MatrixXd& weights = is_joint ? out.joint_weights : out.bone_weights;
    for (int c = 0; c < k; ++c) {
      tensor.set_token(e, c, fits[i].tokens[c]);
      weights(e, c) = fits[i].weights[c];
    }
  }
  return out;
}

namespace {

json tensor_to_json(const TokenTensor& t) {
  json entities = json::array();
  for (int e = 0; e < t.entities(); ++e) {
    json comps = json::array();
    for (int k = 0; k < t.components(); ++k) {
      json tok = json::array();
      for (int f = 0; f < kTokenWidth; ++f) tok.push_back(t(e, k, f));
      comps.push_back(std::move(tok));
    }
    entities.push_back(std::move(comps));
  }
  return entities;
}

TokenTensor tensor_from_json(const json& j, const char* name) {
  if (!j.is_array()) throw TokenizeError(std::string("stream '") + name + "' must be an array");
  const int m = static_cast<int>(j.size());
  const int k = m > 0 ? static_cast<int>(j[0].size()) : 0;
  TokenTensor t(m, k);
  for (int e = 0; e < m; ++e) {
    if (!j[e].is_array() || static_cast<int>(j[e].size()) != k) {
      throw TokenizeError(std::string("stream '") + name + "' has ragged component counts");
    }
    for (int c = 0; c < k; ++c) {
      const json& tok = j[e][c];
      if (!tok.is_array() || tok.size() != kTokenWidth) throw TokenizeError("tokens must have 10 numbers");
      for (int f = 0; f < kTokenWidth; ++f) t(e, c, f) = tok[f].get<double>();
    }
  }
  return t;
}

json weights_to_json(const Eigen::MatrixXd& w) {
  json out = json::array();
  for (Eigen::Index e = 0; e < w.rows(); ++e) {
    json row = json::array();
    for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(e, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd weights_from_json(const json& j, int m, int k) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(m, k, k > 0 ? 1.0 / k : 0.0);
  if (!j.is_array()) return w;
  for (int e = 0; e < m && e < static_cast<int>(j.size()); ++e) {
    for (int c = 0; c < k && c < static_cast<int>(j[e].size()); ++c) w(e, c) = j[e][c].get<double>();
  }
  return w;
}

json points_to_json(const std::vector<StreamPointSet>& sets) {
  json out = json::array();
  for (const auto& s : sets) {
    json pts = json::array();
    for (Eigen::Index t = 0; t < s.points.rows(); ++t) pts.push_back({s.points(t, 0), s.points(t, 1), s.points(t, 2)});
    out.push_back(std::move(pts));
  }
  return out;
}

}  // namespace

std::string token_file_json(const StreamTokens& tokens, const std::string& provenance_json) {
  json doc;
  doc["version"] = 1;
  doc["alpha"] = tokens.alpha;
  doc["k"] = tokens.k;
  doc["streams"] = {{"joint", tensor_to_json(tokens.joint)}, {"bone", tensor_to_json(tokens.bone)}};
  doc["weights"] = {{"joint", weights_to_json(tokens.joint_weights)}, {"bone", weights_to_json(tokens.bone_weights)}};
  doc["label"] = tokens.label ? json(*tokens.label) : json(nullptr);
  if (!provenance_json.empty()) doc["provenance"] = json::parse(provenance_json);
  return doc.dump();
}

StreamTokens parse_token_file(const std::string& text) {
  StreamTokens out;
  try {
    const json doc = json::parse(text);
    if (doc.value("version", 0) != 1) throw TokenizeError("unsupported token file version");
    out.alpha = doc.at("alpha").get<double>();
    out.k = doc.at("k").get<int>();
    out.joint = tensor_from_json(doc.at("streams").at("joint"), "joint");
    out.bone = tensor_from_json(doc.at("streams").at("bone"), "bone");
    if (!out.joint.same_shape(out.bone)) throw TokenizeError("joint and bone streams differ in shape");
    if (out.joint.components() != out.k) throw TokenizeError("token count per entity does not match k");
    const json weights = doc.value("weights", json::object());
    out.joint_weights = weights_from_json(weights.value("joint", json()), out.joint.entities(), out.k);
    out.bone_weights = weights_from_json(weights.value("bone", json()), out.bone.entities(), out.k);
    if (doc.contains("label") && !doc.at("label").is_null()) out.label = doc.at("label").get<std::string>();
  } catch (const json::exception& e) {
    throw TokenizeError(std::string("malformed token file: ") + e.what());
  }
  return out;
}

StreamTokens load_token_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TokenizeError("cannot open token file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_token_file(buf.str());
}

void save_token_file(const StreamTokens& tokens, const std::string& path, const std::string& provenance_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TokenizeError("cannot write token file '" + path + "'");
  out << token_file_json(tokens, provenance_json);
}

std::string streams_dump_json(const std::vector<StreamPointSet>& joint, const std::vector<StreamPointSet>& bone,
                              double alpha) {
  json doc;
  doc["version"] = 1;
  doc["alpha"] = alpha;
  doc["streams"] = {{"joint", points_to_json(joint)}, {"bone", points_to_json(bone)}};
  return doc.dump();
}

}  // namespace mgract
