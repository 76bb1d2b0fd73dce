#include "hvae/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "hvae/errors.hpp"

namespace hvae {

namespace {

using nlohmann::json;

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw CorruptFileError("matrix payload does not match its shape");
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json node_json(const TreeNode& node) {
  json children = json::array();
  for (const auto& c : node.children) children.push_back(node_json(c));
  return {{"label", node.id.label()},
          {"mu", vector_json(node.mu)},
          {"sigma", node.sigma},
          {"children", std::move(children)}};
}

void read_children(TruncatedTree& tree, const NodeId& parent, const json& j) {
  for (const auto& c : j.at("children")) {
    TreeNode& added = tree.add_child(parent, vector_from(c.at("mu")), c.at("sigma").get<double>());
    const NodeId id = added.id;
    if (id.label() != c.at("label").get<std::vector<int>>()) {
      throw CorruptFileError("node label out of sequence at " + id.dotted());
    }
    read_children(tree, id, c);
  }
}

json params_json(const AutoencoderParams& p) {
  json out = json::object();
  for (const auto& t : p.tensors()) {
    out[std::string(t.name)] = {{"rows", t.rows},
                   {"cols", t.cols},
                   {"data", std::vector<double>(t.data, t.data + t.size())}};
  }
  return out;
}

AutoencoderParams params_from(const json& j) {
  const auto in = j.at("enc_mean.w").at("cols").get<int>();
  const auto out = j.at("enc_mean.w").at("rows").get<int>();
  AutoencoderParams p = AutoencoderParams::zeros(in, out);
  for (auto& t : p.tensors()) {
    const Eigen::MatrixXd m = matrix_from(j.at(std::string(t.name)));
    if (m.rows() != t.rows || m.cols() != t.cols) {
      throw CorruptFileError("tensor " + std::string(t.name) + " has an inconsistent shape");
    }
    t.flat() = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  }
  return p;
}

}  // namespace

json tree_to_json(const TruncatedTree& tree) { return node_json(tree.root()); }

TruncatedTree tree_from_json(const json& j, Hyperparams hyper) {
  try {
    TruncatedTree tree(std::move(hyper));
    if (j.at("label").get<std::vector<int>>() != std::vector<int>{1}) {
      throw CorruptFileError("tree root must carry label [1]");
    }
    tree.root().mu = vector_from(j.at("mu"));
    tree.root().sigma = j.at("sigma").get<double>();
    if (tree.root().mu.size() != tree.dim()) throw CorruptFileError("root mean has wrong dimension");
    read_children(tree, NodeId::root(), j);
    tree.validate();
    return tree;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed tree: ") + e.what());
  } catch (const CorruptFileError&) {
    throw;
  } catch (const InputError& e) {
    throw CorruptFileError(std::string("invalid tree: ") + e.what());
  }
}

json checkpoint_to_json(const TrainConfig& config, const ModelState& state) {
  json var = json::array();
  for (const auto& s : state.var) {
    json beta = json::array();
    for (const auto& b : s.beta) beta.push_back({b.gamma0, b.gamma1});
    var.push_back({{"beta", std::move(beta)}, {"phi", matrix_json(s.phi)}});
  }
  const auto& o = state.opt;
  return {{"format", "hvae-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", config.to_json()},
          {"round", state.round},
          {"tree", tree_to_json(state.tree)},
          {"autoencoder", params_json(state.autoencoder)},
          {"optimizer",
           {{"initial_rate", o.initial_rate},
            {"decay_rate", o.decay_rate},
            {"decay_steps", o.decay_steps},
            {"rho", o.rho},
            {"epsilon", o.epsilon},
            {"step", o.step},
            {"mean_square", params_json(o.mean_square)}}},
          {"var", std::move(var)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "hvae-checkpoint") {
      throw CorruptFileError("not a checkpoint document");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                                 ", expected " + std::to_string(kCheckpointVersion));
    }
    Checkpoint c;
    c.config = TrainConfig::from_json(j.at("config"));
    auto& s = c.state;
    s.round = j.at("round").get<int>();
    s.tree = tree_from_json(j.at("tree"), c.config.hyperparams());
    s.autoencoder = params_from(j.at("autoencoder"));
    const auto& o = j.at("optimizer");
    s.opt.initial_rate = o.at("initial_rate").get<double>();
    s.opt.decay_rate = o.at("decay_rate").get<double>();
    s.opt.decay_steps = o.at("decay_steps").get<double>();
    s.opt.rho = o.at("rho").get<double>();
    s.opt.epsilon = o.at("epsilon").get<double>();
    s.opt.step = o.at("step").get<std::int64_t>();
    s.opt.mean_square = params_from(o.at("mean_square"));

    const auto layout = TreeLayout::build(s.tree);
    for (const auto& v : j.at("var")) {
      SequenceVarState st;
      for (const auto& b : v.at("beta")) {
        st.beta.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
      }
      st.phi = matrix_from(v.at("phi"));
      if (static_cast<int>(st.beta.size()) != layout.edge_count() ||
          st.phi.rows() != layout.path_count()) {
        throw CorruptFileError("variational state does not match the tree");
      }
      s.var.push_back(std::move(st));
    }
    if (s.autoencoder.latent_dim() != s.tree.dim() ||
        s.opt.mean_square.feature_dim() != s.autoencoder.feature_dim() ||
        s.opt.mean_square.latent_dim() != s.autoencoder.latent_dim()) {
      throw CorruptFileError("autoencoder, optimizer and tree dimensions disagree");
    }
    return c;
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainConfig& config, const ModelState& state,
                     const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw InputError("cannot open " + tmp.string() + " for writing");
    os << checkpoint_to_json(config, state).dump() << '\n';
    if (!os) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw CorruptFileError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace hvae
