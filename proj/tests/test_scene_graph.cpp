#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ocgan/scene_graph.hpp"

using namespace ocgan;
using nn::Rng;
using nn::Tensor;

namespace {

ObjectInstance obj(int cls, double x0, double y0, double x1, double y1, int idx = 0) {
  return {cls, {x0, y0, x1, y1}, idx};
}

// Rule-by-rule transcription of the six relation definitions, written
// independently of relation_between.
Relation relation_oracle(const BoundingBox& s, const BoundingBox& o) {
  const bool s_inside = s.x0 >= o.x0 && s.x1 <= o.x1 && s.y0 >= o.y0 && s.y1 <= o.y1;
  const bool o_inside = o.x0 >= s.x0 && o.x1 <= s.x1 && o.y0 >= s.y0 && o.y1 <= s.y1;
  if (s_inside && o_inside) {
    // identical boxes: fall through to centers
  } else if (s_inside) {
    return Relation::kInside;  // "subject contained inside object"
  } else if (o_inside) {
    return Relation::kSurrounding;  // "object contained inside subject"
  }
  const double scx = (s.x0 + s.x1) / 2, scy = (s.y0 + s.y1) / 2;
  const double ocx = (o.x0 + o.x1) / 2, ocy = (o.y0 + o.y1) / 2;
  if (std::abs(scx - ocx) >= std::abs(scy - ocy)) {
    if (scx < ocx) return Relation::kLeftOf;   // "subject's centre is to the left"
    if (scx > ocx) return Relation::kRightOf;  // "subject's centre is to the right"
    return Relation::kLeftOf;
  }
  return scy < ocy ? Relation::kAbove : Relation::kBelow;
}

BoundingBox random_box(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x0 = u(gen) * 0.8, y0 = u(gen) * 0.8;
  return {x0, y0, x0 + 0.02 + u(gen) * (0.98 - x0 - 0.02), y0 + 0.02 + u(gen) * (0.98 - y0 - 0.02)};
}

Layout random_layout(std::mt19937_64& gen, int n_objects, int num_classes = 4) {
  Layout l;
  l.canvas_h = l.canvas_w = 64;
  for (int i = 0; i < n_objects; ++i)
    l.objects.push_back({static_cast<int>(gen() % num_classes), random_box(gen), i});
  return l;
}

}  // namespace

TEST_CASE("relation_between: canonical examples") {
  CHECK(relation_between(obj(0, 0, 0, 0.3, 0.3), obj(1, 0.6, 0, 0.9, 0.3)) == Relation::kLeftOf);
  CHECK(relation_between(obj(0, 0.3, 0.3, 0.5, 0.5), obj(1, 0.1, 0.1, 0.9, 0.9)) ==
        Relation::kInside);
  CHECK(relation_between(obj(0, 0.1, 0.1, 0.9, 0.9), obj(1, 0.3, 0.3, 0.5, 0.5)) ==
        Relation::kSurrounding);
  CHECK(relation_between(obj(0, 0.2, 0.0, 0.4, 0.2), obj(1, 0.2, 0.6, 0.4, 0.8)) ==
        Relation::kAbove);
  // identical boxes: non-containment, center tie, horizontal preference
  CHECK(relation_between(obj(0, 0.2, 0.2, 0.4, 0.4), obj(1, 0.2, 0.2, 0.4, 0.4)) ==
        Relation::kLeftOf);
}

TEST_CASE("relation_between matches the rule oracle on 1000 random pairs") {
  std::mt19937_64 gen(2024);
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = obj(0, 0, 0, 1, 1);
    ObjectInstance s = a, o = a;
    s.box = random_box(gen);
    o.box = random_box(gen);
    if (relation_between(s, o) == relation_oracle(s.box, o.box)) ++agree;
  }
  CHECK(agree == 1000);
}

TEST_CASE("relation_between(a,b) and relation_between(b,a) are inverses") {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 500; ++i) {
    ObjectInstance s = obj(0, 0, 0, 1, 1), o = s;
    s.box = random_box(gen);
    o.box = random_box(gen);
    CHECK(relation_between(s, o) == inverse(relation_between(o, s)));
  }
}

TEST_CASE("build_scene_graph: node and edge structure") {
  std::mt19937_64 gen(5);
  Layout l1 = random_layout(gen, 1);
  SceneGraph g1 = build_scene_graph(l1);
  CHECK(g1.nodes.size() == 1);
  CHECK(g1.edges.empty());

  Layout l2 = random_layout(gen, 2);
  SceneGraph g2 = build_scene_graph(l2);
  CHECK(g2.edges.size() == 2);
  CHECK(g2.edges[0].relation == inverse(g2.edges[1].relation));

  Layout l5 = random_layout(gen, 5);
  SceneGraph g5 = build_scene_graph(l5);
  CHECK(g5.edges.size() == 20);  // 2 * C(5,2)
  for (const auto& e : g5.edges) {
    bool found_inverse = false;
    for (const auto& f : g5.edges)
      if (f.subject == e.object && f.object == e.subject && f.relation == inverse(e.relation))
        found_inverse = true;
    CHECK(found_inverse);
  }
}

TEST_CASE("build_scene_graph: edge count invariant over random layouts") {
  std::mt19937_64 gen(17);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(gen() % 8);
    SceneGraph g = build_scene_graph(random_layout(gen, n));
    CHECK(static_cast<int>(g.edges.size()) == n * (n - 1));
    g.validate();
  }
}

TEST_CASE("build_scene_graph: max_edges keeps nearest-center pairs") {
  Layout l;
  l.canvas_h = l.canvas_w = 64;
  l.objects.push_back(obj(0, 0.0, 0.0, 0.1, 0.1, 0));
  l.objects.push_back(obj(1, 0.05, 0.0, 0.15, 0.1, 1));  // nearest to object 0
  l.objects.push_back(obj(2, 0.8, 0.8, 0.9, 0.9, 2));    // far away
  SceneGraph g = build_scene_graph(l, 2);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0].subject == 0);
  CHECK(g.edges[0].object == 1);
  CHECK(g.edges[1].subject == 1);
  CHECK(g.edges[1].object == 0);
}

TEST_CASE("scene graph JSON uses the six relation strings verbatim") {
  Layout l;
  l.canvas_h = l.canvas_w = 64;
  l.objects.push_back(obj(0, 0.0, 0.0, 0.3, 0.3, 0));
  l.objects.push_back(obj(1, 0.6, 0.0, 0.9, 0.3, 1));
  SceneGraph g = build_scene_graph(l);
  nlohmann::json j = scene_graph_to_json(g, {"cat", "dog"});
  CHECK(j["nodes"][0] == "cat");
  CHECK(j["edges"][0][1] == "left of");
  CHECK(j["edges"][1][1] == "right of");

  for (const auto& s :
       {"left of", "right of", "above", "below", "inside", "surrounding"})
    CHECK(relation_to_string(relation_from_string(s)) == s);
}

TEST_CASE("gcn_encode: zero projection weights give zero embeddings") {
  GcnConfig cfg;
  cfg.num_classes = 4;
  cfg.node_embed_dim = 8;
  cfg.relation_embed_dim = 4;
  cfg.hidden = 8;
  cfg.out_dim = 16;
  GcnEncoder enc(cfg, Rng(1));
  for (auto& [name, p] : enc.named_parameters())
    if (name.find("local_proj") != std::string::npos ||
        name.find("global_proj") != std::string::npos)
      p->value.zero();
  std::mt19937_64 gen(2);
  GraphEmbedding e = enc.encode_values(build_scene_graph(random_layout(gen, 3)));
  for (long i = 0; i < e.local.size(); ++i) CHECK(e.local[i] == 0.0);
  for (long i = 0; i < e.global.size(); ++i) CHECK(e.global[i] == 0.0);
}

TEST_CASE("gcn_encode: permutation equivariance of local, invariance of global") {
  GcnConfig cfg;
  cfg.num_classes = 5;
  cfg.node_embed_dim = 8;
  cfg.relation_embed_dim = 4;
  cfg.hidden = 12;
  cfg.out_dim = 16;
  GcnEncoder enc(cfg, Rng(3));
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 5; ++trial) {
    Layout l = random_layout(gen, 4, 5);
    std::vector<int> perm = {2, 0, 3, 1};
    Layout lp;
    lp.canvas_h = lp.canvas_w = 64;
    for (int i = 0; i < 4; ++i) {
      lp.objects.push_back(l.objects[perm[i]]);
      lp.objects.back().instance_index = i;
    }
    GraphEmbedding a = enc.encode_values(build_scene_graph(l));
    GraphEmbedding b = enc.encode_values(build_scene_graph(lp));
    // row i of the permuted encoding equals row perm[i] of the original
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < 16; ++d)
        CHECK(b.local.at(i, d) == doctest::Approx(a.local.at(perm[i], d)).epsilon(1e-9));
    for (int d = 0; d < 16; ++d)
      CHECK(b.global[d] == doctest::Approx(a.global[d]).epsilon(1e-9));
  }
}

TEST_CASE("gcn_encode: isomorphic graphs share the global embedding") {
  GcnConfig cfg;
  cfg.num_classes = 3;
  cfg.node_embed_dim = 6;
  cfg.relation_embed_dim = 4;
  cfg.hidden = 8;
  cfg.out_dim = 12;
  GcnEncoder enc(cfg, Rng(7));
  SceneGraph g1;
  g1.nodes = {0, 1, 2};
  g1.edges = {{0, Relation::kLeftOf, 1},  {1, Relation::kRightOf, 0},
              {0, Relation::kAbove, 2},   {2, Relation::kBelow, 0},
              {1, Relation::kInside, 2},  {2, Relation::kSurrounding, 1}};
  // relabel nodes by the permutation (0,1,2) -> (2,0,1)
  SceneGraph g2;
  g2.nodes = {1, 2, 0};
  auto m = [](int i) { return (i + 2) % 3; };
  for (const auto& e : g1.edges) g2.edges.push_back({m(e.subject), e.relation, m(e.object)});
  GraphEmbedding e1 = enc.encode_values(g1);
  GraphEmbedding e2 = enc.encode_values(g2);
  for (int d = 0; d < 12; ++d)
    CHECK(e1.global[d] == doctest::Approx(e2.global[d]).epsilon(1e-9));
}

TEST_CASE("gcn_encode: single-node graph flows through self terms") {
  GcnConfig cfg;
  cfg.num_classes = 2;
  cfg.node_embed_dim = 4;
  cfg.relation_embed_dim = 4;
  cfg.hidden = 6;
  cfg.out_dim = 8;
  GcnEncoder enc(cfg, Rng(9));
  SceneGraph g;
  g.nodes = {1};
  GraphEmbedding e = enc.encode_values(g);
  CHECK(e.local.shape() == std::vector<int>({1, 8}));
  CHECK(e.local.all_finite());
  CHECK(e.global.all_finite());
}

TEST_CASE("gcn_encode gradients match central finite differences") {
  GcnConfig cfg;
  cfg.num_classes = 3;
  cfg.node_embed_dim = 4;
  cfg.relation_embed_dim = 3;
  cfg.hidden = 5;
  cfg.layers = 2;
  cfg.out_dim = 6;
  GcnEncoder enc(cfg, Rng(11));
  std::mt19937_64 gen(12);
  SceneGraph g = build_scene_graph(random_layout(gen, 3, 3));

  auto loss_value = [&enc, &g]() {
    GraphEmbeddingVar e = enc.encode(g);
    return nn::add(nn::sum_all(nn::mul(e.local, e.local)), nn::sum_all(nn::mul(e.global, e.global)));
  };
  enc.zero_grad();
  nn::backward(loss_value());

  const double h = 1e-6;
  for (auto* p : enc.parameters()) {
    for (long j = 0; j < p->value.size(); j += std::max<long>(1, p->value.size() / 5)) {
      p->value[j] += h;
      const double up = loss_value().value().item();
      p->value[j] -= 2 * h;
      const double dn = loss_value().value().item();
      p->value[j] += h;
      const double numeric = (up - dn) / (2 * h);
      const double analytic = p->grad[j];
      CHECK(std::abs(numeric - analytic) / std::max({1.0, std::abs(numeric)}) < 1e-3);
    }
  }
}

TEST_CASE("gcn_encode with the optional global node stays valid") {
  GcnConfig cfg;
  cfg.num_classes = 3;
  cfg.node_embed_dim = 4;
  cfg.relation_embed_dim = 3;
  cfg.hidden = 5;
  cfg.out_dim = 6;
  cfg.add_global_node = true;
  GcnEncoder enc(cfg, Rng(13));
  std::mt19937_64 gen(14);
  Layout l = random_layout(gen, 3, 3);
  GraphEmbedding e = enc.encode_values(build_scene_graph(l));
  CHECK(e.local.shape() == std::vector<int>({3, 6}));  // local rows stay per-object
  CHECK(e.local.all_finite());
}
