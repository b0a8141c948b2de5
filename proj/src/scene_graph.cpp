#include "ocgan/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ocgan {

using nn::Tensor;
using nn::Var;

Relation inverse(Relation r) {
  switch (r) {
    case Relation::kLeftOf: return Relation::kRightOf;
    case Relation::kRightOf: return Relation::kLeftOf;
    case Relation::kAbove: return Relation::kBelow;
    case Relation::kBelow: return Relation::kAbove;
    case Relation::kInside: return Relation::kSurrounding;
    case Relation::kSurrounding: return Relation::kInside;
  }
  throw std::logic_error("bad relation");
}

std::string relation_to_string(Relation r) {
  switch (r) {
    case Relation::kLeftOf: return "left of";
    case Relation::kRightOf: return "right of";
    case Relation::kAbove: return "above";
    case Relation::kBelow: return "below";
    case Relation::kInside: return "inside";
    case Relation::kSurrounding: return "surrounding";
  }
  throw std::logic_error("bad relation");
}

Relation relation_from_string(const std::string& s) {
  for (int i = 0; i < kNumRelations; ++i)
    if (relation_to_string(static_cast<Relation>(i)) == s) return static_cast<Relation>(i);
  throw std::invalid_argument("unknown relation: " + s);
}

void SceneGraph::validate() const {
  const int j = static_cast<int>(nodes.size());
  for (const auto& e : edges) {
    if (e.subject < 0 || e.subject >= j || e.object < 0 || e.object >= j)
      throw std::invalid_argument("scene graph edge index out of range");
    if (e.subject == e.object) throw std::invalid_argument("scene graph self-edge");
  }
}

Relation relation_between(const ObjectInstance& subject, const ObjectInstance& object) {
  const auto& s = subject.box;
  const auto& o = object.box;
  const bool s_in_o = s.x0 >= o.x0 && s.y0 >= o.y0 && s.x1 <= o.x1 && s.y1 <= o.y1;
  const bool o_in_s = o.x0 >= s.x0 && o.y0 >= s.y0 && o.x1 <= s.x1 && o.y1 <= s.y1;
  // identical boxes satisfy both; treat as non-containment
  if (s_in_o && !o_in_s) return Relation::kInside;
  if (o_in_s && !s_in_o) return Relation::kSurrounding;
  const auto [scx, scy] = s.center();
  const auto [ocx, ocy] = o.center();
  const double dx = scx - ocx;
  const double dy = scy - ocy;
  if (std::abs(dx) >= std::abs(dy)) {
    if (dx < 0) return Relation::kLeftOf;
    if (dx > 0) return Relation::kRightOf;
    return Relation::kLeftOf;  // fully degenerate pair
  }
  return dy < 0 ? Relation::kAbove : Relation::kBelow;
}

SceneGraph build_scene_graph(const Layout& layout, int max_edges) {
  if (layout.objects.empty()) throw std::invalid_argument("build_scene_graph: empty layout");
  SceneGraph g;
  for (const auto& o : layout.objects) g.nodes.push_back(o.class_id);
  const int n = static_cast<int>(layout.objects.size());
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  if (max_edges > 0 && 2 * static_cast<int>(pairs.size()) > max_edges) {
    auto dist2 = [&layout](const std::pair<int, int>& p) {
      const auto [ax, ay] = layout.objects[p.first].box.center();
      const auto [bx, by] = layout.objects[p.second].box.center();
      return (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
    };
    std::stable_sort(pairs.begin(), pairs.end(),
                     [&dist2](const auto& a, const auto& b) { return dist2(a) < dist2(b); });
    pairs.resize(static_cast<size_t>(max_edges / 2));
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [i, j] : pairs) {
    const Relation r = relation_between(layout.objects[i], layout.objects[j]);
    g.edges.push_back({i, r, j});
    g.edges.push_back({j, inverse(r), i});
  }
  return g;
}

nlohmann::json scene_graph_to_json(const SceneGraph& g,
                                   const std::vector<std::string>& class_names) {
  auto name_of = [&class_names](int class_id) {
    if (class_id >= 0 && class_id < static_cast<int>(class_names.size()))
      return class_names[class_id];
    return "class_" + std::to_string(class_id);
  };
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (int c : g.nodes) j["nodes"].push_back(name_of(c));
  j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges)
    j["edges"].push_back(
        {name_of(g.nodes[e.subject]), relation_to_string(e.relation), name_of(g.nodes[e.object])});
  j["edge_indices"] = nlohmann::json::array();
  for (const auto& e : g.edges) j["edge_indices"].push_back({e.subject, e.object});
  return j;
}

// ---------------------------------------------------------------------------
// GCN encoder

GcnEncoder::GcnEncoder(const GcnConfig& config, nn::Rng rng) : config_(config) {
  const int extra_node = config.add_global_node ? 1 : 0;
  node_embed_ = nn::Embedding(config.num_classes + extra_node, config.node_embed_dim,
                              rng.fork("node_embed"));
  relation_embed_ = nn::Embedding(kNumRelations + extra_node, config.relation_embed_dim,
                                  rng.fork("relation_embed"));
  int dim = config.node_embed_dim;
  for (int l = 0; l < config.layers; ++l) {
    auto layer = std::make_unique<ConvLayer>();
    layer->message = nn::Dense(2 * dim + config.relation_embed_dim, 2 * config.hidden, false,
                               rng.fork("msg" + std::to_string(l)), nn::Init::kHeNormal);
    layer->self_path = nn::Dense(dim, config.hidden, false,
                                 rng.fork("self" + std::to_string(l)), nn::Init::kHeNormal);
    convs_.push_back(std::move(layer));
    dim = config.hidden;
  }
  local_proj_ = nn::Dense(dim, config.out_dim, false, rng.fork("local_proj"), nn::Init::kHeNormal);
  global_proj_ =
      nn::Dense(dim, config.out_dim, false, rng.fork("global_proj"), nn::Init::kHeNormal);
}

void GcnEncoder::register_state() {
  register_module("node_embed", node_embed_);
  register_module("relation_embed", relation_embed_);
  for (size_t l = 0; l < convs_.size(); ++l) {
    register_module("conv" + std::to_string(l) + ".message", convs_[l]->message);
    register_module("conv" + std::to_string(l) + ".self", convs_[l]->self_path);
  }
  register_module("local_proj", local_proj_);
  register_module("global_proj", global_proj_);
}

GraphEmbeddingVar GcnEncoder::encode(const SceneGraph& graph) {
  graph.validate();
  const int j_in = static_cast<int>(graph.nodes.size());
  std::vector<int> node_classes = graph.nodes;
  std::vector<int> subj, obj, rel;
  for (const auto& e : graph.edges) {
    subj.push_back(e.subject);
    obj.push_back(e.object);
    rel.push_back(static_cast<int>(e.relation));
  }
  int j_total = j_in;
  if (config_.add_global_node) {
    // extra node attached to every object through a reserved relation
    const int global_idx = j_total++;
    node_classes.push_back(config_.num_classes);
    for (int i = 0; i < j_in; ++i) {
      subj.push_back(i);
      obj.push_back(global_idx);
      rel.push_back(kNumRelations);
    }
  }

  Var x = node_embed_.forward(node_classes);  // (J, node_embed_dim)
  const int k = static_cast<int>(subj.size());
  for (auto& layer : convs_) {
    Var self_term = layer->self_path.forward(x);
    if (k > 0) {
      Var rel_emb = relation_embed_.forward(rel);
      Var x_s = nn::embedding_rows(x, subj);
      Var x_o = nn::embedding_rows(x, obj);
      Var msg_in = nn::concat_cols({x_s, rel_emb, x_o});
      Var msg = nn::relu(layer->message.forward(msg_in));  // (K, 2*hidden)
      Var to_subj = nn::narrow_cols(msg, 0, config_.hidden);
      Var to_obj = nn::narrow_cols(msg, config_.hidden, config_.hidden);
      std::vector<int> targets = subj;
      targets.insert(targets.end(), obj.begin(), obj.end());
      Var pooled =
          nn::scatter_mean_rows(nn::concat_dim0({to_subj, to_obj}), targets, j_total);
      x = nn::relu(nn::add(self_term, pooled));
    } else {
      x = nn::relu(self_term);
    }
  }

  GraphEmbeddingVar out;
  Var local_all = local_proj_.forward(x);
  out.local = config_.add_global_node ? nn::narrow0(local_all, 0, j_in) : local_all;
  Var pooled = nn::reshape(nn::mean_dim0(x), {1, config_.hidden});
  out.global = nn::reshape(global_proj_.forward(pooled), {config_.out_dim});
  return out;
}

GraphEmbedding GcnEncoder::encode_values(const SceneGraph& graph) {
  GraphEmbeddingVar v = encode(graph);
  return {v.local.value().clone(), v.global.value().clone()};
}

}  // namespace ocgan
