#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ocgan/layout.hpp"
#include "ocgan/nn/layers.hpp"

namespace ocgan {

/// The six positional relations. INSIDE/SURROUNDING, LEFT_OF/RIGHT_OF
/// and ABOVE/BELOW are mutual inverses.
enum class Relation { kLeftOf, kRightOf, kAbove, kBelow, kInside, kSurrounding };
constexpr int kNumRelations = 6;

Relation inverse(Relation r);
std::string relation_to_string(Relation r);  // "left of", "right of", ...
Relation relation_from_string(const std::string& s);

struct SceneGraph {
  struct Edge {
    int subject = 0;
    Relation relation = Relation::kLeftOf;
    int object = 0;
  };
  std::vector<int> nodes;  // class ids, in layout object order
  std::vector<Edge> edges;

  void validate() const;
};

/// Positional relation of `subject` w.r.t. `object`. Containment is
/// tested first (non-strict); identical boxes fall through to center
/// comparison. Center ties prefer the horizontal axis, then LEFT_OF.
Relation relation_between(const ObjectInstance& subject, const ObjectInstance& object);

/// All ordered pairs i<j plus the inverse edge for each. `max_edges` > 0
/// caps the graph, keeping nearest-center pairs first (deterministic).
SceneGraph build_scene_graph(const Layout& layout, int max_edges = 0);

nlohmann::json scene_graph_to_json(const SceneGraph& g,
                                   const std::vector<std::string>& class_names = {});

/// Local per-node features plus a pooled global vector, both in the
/// SGSM common space.
struct GraphEmbedding {
  nn::Tensor local;   // (J, D)
  nn::Tensor global;  // (D)
};

struct GraphEmbeddingVar {
  nn::Var local;
  nn::Var global;
};

struct GcnConfig {
  int num_classes = 0;
  int node_embed_dim = 64;
  int relation_embed_dim = 32;
  int hidden = 128;
  int layers = 3;
  int out_dim = 256;  // common semantic space
  bool add_global_node = false;
};

/// Graph convolutional encoder over (subject, relation, object) triples:
/// per-edge messages from an MLP on [x_s ; e_r ; x_o], mean aggregation
/// into nodes alongside a self term, then linear projections to the
/// common space (per-node local, mean-pooled global).
class GcnEncoder : public nn::Module {
 public:
  GcnEncoder() = default;
  GcnEncoder(const GcnConfig& config, nn::Rng rng);

  GraphEmbeddingVar encode(const SceneGraph& graph);
  GraphEmbedding encode_values(const SceneGraph& graph);

  const GcnConfig& config() const { return config_; }

 protected:
  void register_state() override;

 private:
  GcnConfig config_;
  nn::Embedding node_embed_;
  nn::Embedding relation_embed_;
  struct ConvLayer {
    nn::Dense message;
    nn::Dense self_path;
  };
  std::vector<std::unique_ptr<ConvLayer>> convs_;
  nn::Dense local_proj_;
  nn::Dense global_proj_;
};

}  // namespace ocgan
