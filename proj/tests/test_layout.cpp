#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ocgan/layout.hpp"
#include "ocgan/nn/ops.hpp"

using namespace ocgan;
using nn::Tensor;
using nn::Var;

namespace {

Layout make_layout(std::vector<std::pair<int, BoundingBox>> objs, int h = 64, int w = 64) {
  Layout l;
  l.canvas_h = h;
  l.canvas_w = w;
  int idx = 0;
  for (auto& [c, b] : objs) l.objects.push_back({c, b, idx++});
  return l;
}

// independent per-pixel coverage rule: x in [floor(x0*W), ceil(x1*W))
bool covered(const BoundingBox& b, int y, int x, int H, int W) {
  return x >= std::floor(b.x0 * W) && x < std::ceil(b.x1 * W) && y >= std::floor(b.y0 * H) &&
         y < std::ceil(b.y1 * H);
}

}  // namespace

TEST_CASE("rasterize_onehot: full-canvas box fills exactly one channel") {
  Layout l = make_layout({{2, {0, 0, 1, 1}}});
  Tensor r = rasterize_onehot(l, 3, 4, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(r.at(c, y, x) == (c == 2 ? 1.0 : 0.0));
}

TEST_CASE("rasterize_onehot: overlapping same-class boxes stay binary") {
  Layout l = make_layout({{0, {0.0, 0.0, 0.5, 0.5}}, {0, {0.25, 0.25, 0.75, 0.75}}});
  Tensor r = rasterize_onehot(l, 2, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool expect = covered(l.objects[0].box, y, x, 8, 8) ||
                          covered(l.objects[1].box, y, x, 8, 8);
      CHECK(r.at(0, y, x) == (expect ? 1.0 : 0.0));
    }
}

TEST_CASE("rasterize_onehot: quarter box covers rows/cols 2..5 at 8x8") {
  Layout l = make_layout({{0, {0.25, 0.25, 0.75, 0.75}}});
  Tensor r = rasterize_onehot(l, 1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool inside = y >= 2 && y <= 5 && x >= 2 && x <= 5;
      CHECK(r.at(0, y, x) == (inside ? 1.0 : 0.0));
      CHECK(r.at(0, y, x) == (covered(l.objects[0].box, y, x, 8, 8) ? 1.0 : 0.0));
    }
}

TEST_CASE("rasterize_onehot: degenerate box expands to one pixel") {
  Layout l = make_layout({{0, {0.5, 0.5, 0.5001, 0.5001}}});
  Tensor r = rasterize_onehot(l, 1, 8, 8);
  double total = 0;
  for (long i = 0; i < r.size(); ++i) total += r[i];
  CHECK(total >= 1.0);  // never silently dropped

  BoundingBox tiny{0.99999, 0.99999, 1.0, 1.0};
  PixelBox pb = pixel_extent(tiny, 8, 8);
  CHECK(pb.width() >= 1);
  CHECK(pb.height() >= 1);
  CHECK(pb.x1 <= 8);
  CHECK(pb.y1 <= 8);
}

TEST_CASE("rasterize_onehot is permutation-invariant") {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<int, BoundingBox>> objs;
    const int n = 2 + static_cast<int>(gen() % 4);
    for (int i = 0; i < n; ++i) {
      double x0 = u(gen) * 0.8, y0 = u(gen) * 0.8;
      objs.push_back({static_cast<int>(gen() % 3),
                      {x0, y0, x0 + 0.1 + u(gen) * 0.15, y0 + 0.1 + u(gen) * 0.15}});
    }
    Layout a = make_layout(objs);
    std::shuffle(objs.begin(), objs.end(), gen);
    Layout b = make_layout(objs);
    Tensor ra = rasterize_onehot(a, 3, 16, 16);
    Tensor rb = rasterize_onehot(b, 3, 16, 16);
    for (long i = 0; i < ra.size(); ++i) CHECK(ra[i] == rb[i]);
  }
}

TEST_CASE("instance_boundary_map: perimeter pixel counts") {
  // rows/cols 2..5 -> 4x4 box -> 12 perimeter pixels
  Layout l = make_layout({{0, {0.25, 0.25, 0.75, 0.75}}});
  Tensor b = instance_boundary_map(l, 8, 8);
  double total = 0;
  for (long i = 0; i < b.size(); ++i) total += b[i];
  CHECK(total == 12.0);

  // 2x2-pixel box has no interior: all 4 pixels are boundary
  Layout l2 = make_layout({{0, {0.0, 0.0, 0.25, 0.25}}});
  Tensor b2 = instance_boundary_map(l2, 8, 8);
  double total2 = 0;
  for (long i = 0; i < b2.size(); ++i) total2 += b2[i];
  CHECK(total2 == 4.0);

  // duplicated boxes: union is idempotent
  Layout l3 = make_layout({{0, {0.25, 0.25, 0.75, 0.75}}, {1, {0.25, 0.25, 0.75, 0.75}}});
  Tensor b3 = instance_boundary_map(l3, 8, 8);
  for (long i = 0; i < b.size(); ++i) CHECK(b3[i] == b[i]);
}

TEST_CASE("boundary pixels are a subset of the rasterized union") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<int, BoundingBox>> objs;
    const int n = 1 + static_cast<int>(gen() % 4);
    for (int i = 0; i < n; ++i) {
      double x0 = u(gen) * 0.7, y0 = u(gen) * 0.7;
      objs.push_back({0, {x0, y0, x0 + 0.05 + u(gen) * 0.25, y0 + 0.05 + u(gen) * 0.25}});
    }
    Layout l = make_layout(objs);
    Tensor bd = instance_boundary_map(l, 16, 16);
    Tensor rs = rasterize_onehot(l, 1, 16, 16);
    for (long i = 0; i < bd.size(); ++i)
      if (bd[i] == 1.0) CHECK(rs[i] == 1.0);
  }
}

TEST_CASE("non-overlapping boxes: boundary count equals summed perimeters") {
  Layout l = make_layout({{0, {0.0, 0.0, 0.25, 0.25}}, {1, {0.5, 0.5, 1.0, 1.0}}});
  Tensor bd = instance_boundary_map(l, 16, 16);
  double total = 0;
  for (long i = 0; i < bd.size(); ++i) total += bd[i];
  // 4x4 box -> 12; 8x8 box -> 28
  CHECK(total == 12.0 + 28.0);
}

TEST_CASE("crop_objects: full-canvas box and constant image") {
  Layout l = make_layout({{0, {0, 0, 1, 1}}}, 64, 64);
  Tensor img({3, 64, 64});
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (long i = 0; i < img.size(); ++i) img[i] = u(gen);
  auto crops = crop_objects(img, l, 64);
  REQUIRE(crops.size() == 1);
  for (long i = 0; i < img.size(); ++i) CHECK(crops[0][i] == doctest::Approx(img[i]));

  Tensor flat = Tensor::full({3, 64, 64}, 0.3);
  Layout l2 = make_layout({{0, {0.1, 0.2, 0.6, 0.9}}, {1, {0.4, 0.1, 0.9, 0.5}}}, 64, 64);
  for (const auto& c : crop_objects(flat, l2, 16))
    for (long i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(0.3));
}

TEST_CASE("crop_objects: checkerboard cell crop is uniform") {
  // 8x8 cells of 8px; box over one white cell
  Tensor img({3, 64, 64});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double v = ((y / 8 + x / 8) % 2 == 0) ? 1.0 : 0.0;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
    }
  Layout l = make_layout({{0, {0.0, 0.0, 0.125, 0.125}}}, 64, 64);
  auto crops = crop_objects(img, l, 8);
  for (long i = 0; i < crops[0].size(); ++i) CHECK(crops[0][i] == doctest::Approx(1.0));
}

TEST_CASE("crop then paste at native extent reproduces the region") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor img({3, 64, 64});
  for (long i = 0; i < img.size(); ++i) img[i] = u(gen);
  Layout l = make_layout({{0, {0.25, 0.25, 0.5, 0.5}}}, 64, 64);
  const PixelBox pb = pixel_extent(l.objects[0].box, 64, 64);
  REQUIRE(pb.width() == 16);
  auto crops = crop_objects(img, l, 16);
  Tensor out = img.clone();
  paste_crop(out, crops[0], pb);
  for (long i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-12));
}

TEST_CASE("crop_objects rejects mismatched image") {
  Layout l = make_layout({{0, {0, 0, 1, 1}}}, 64, 64);
  Tensor img({3, 32, 32});
  CHECK_THROWS(crop_objects(img, l, 8));
}

TEST_CASE("build_conditioning: zero embeddings zero the embedding block only") {
  Layout l = make_layout({{1, {0.25, 0.25, 0.75, 0.75}}});
  Tensor emb = Tensor::zeros({1, 4});
  Tensor masks = Tensor::full({1, 4, 4}, 1.0);
  ConditioningStack s = build_conditioning(l, emb, masks, 3, 8, 8);
  REQUIRE(s.tensor.shape() == std::vector<int>({4 + 3 + 1, 8, 8}));
  auto blocks = s.blocks();
  CHECK(blocks[0].name == "masked_object_embeddings");
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 64; ++i) CHECK(s.tensor[c * 64 + i] == 0.0);
  // one-hot block matches rasterize_onehot
  Tensor oh = rasterize_onehot(l, 3, 8, 8);
  for (long i = 0; i < oh.size(); ++i) CHECK(s.tensor[4 * 64 + i] == oh[i]);
  // boundary block matches instance_boundary_map
  Tensor bd = instance_boundary_map(l, 8, 8);
  for (long i = 0; i < bd.size(); ++i) CHECK(s.tensor[7 * 64 + i] == bd[i]);
}

TEST_CASE("build_conditioning: all-ones mask broadcasts the embedding over the box") {
  Layout l = make_layout({{0, {0.25, 0.25, 0.75, 0.75}}});
  Tensor emb = Tensor::from({1, 2}, {1.5, -2.0});
  Tensor masks = Tensor::full({1, 4, 4}, 1.0);
  ConditioningStack s = build_conditioning(l, emb, masks, 1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool in = y >= 2 && y <= 5 && x >= 2 && x <= 5;
      CHECK(s.tensor.at(0, y, x) == doctest::Approx(in ? 1.5 : 0.0));
      CHECK(s.tensor.at(1, y, x) == doctest::Approx(in ? -2.0 : 0.0));
    }
}

TEST_CASE("build_conditioning: overlapping objects sum in the embedding block") {
  Layout l = make_layout({{0, {0.0, 0.0, 0.5, 0.5}}, {0, {0.25, 0.25, 0.75, 0.75}}});
  Tensor emb = Tensor::from({2, 1}, {1.0, 10.0});
  Tensor masks = Tensor::full({2, 4, 4}, 1.0);
  ConditioningStack s = build_conditioning(l, emb, masks, 1, 8, 8);
  // per-pixel summation oracle
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double expect = 0;
      if (covered(l.objects[0].box, y, x, 8, 8)) expect += 1.0;
      if (covered(l.objects[1].box, y, x, 8, 8)) expect += 10.0;
      CHECK(s.tensor.at(0, y, x) == doctest::Approx(expect));
    }
}

TEST_CASE("build_conditioning validates input shapes") {
  Layout l = make_layout({{0, {0.1, 0.1, 0.6, 0.6}}, {0, {0.3, 0.2, 0.8, 0.7}}});
  CHECK_THROWS(build_conditioning(l, Tensor::zeros({1, 4}), Tensor::zeros({2, 4, 4}), 2, 8, 8));
  CHECK_THROWS(build_conditioning(l, Tensor::zeros({2, 4}), Tensor::zeros({1, 4, 4}), 2, 8, 8));
}

TEST_CASE("build_conditioning is linear in the embeddings") {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> g(0, 1);
  Layout l = make_layout({{0, {0.1, 0.1, 0.6, 0.6}}, {1, {0.3, 0.2, 0.8, 0.7}}});
  Tensor masks({2, 4, 4});
  for (long i = 0; i < masks.size(); ++i) masks[i] = std::abs(g(gen));
  Tensor e1({2, 3}), e2({2, 3});
  for (long i = 0; i < e1.size(); ++i) {
    e1[i] = g(gen);
    e2[i] = g(gen);
  }
  Tensor sum({2, 3});
  for (long i = 0; i < sum.size(); ++i) sum[i] = e1[i] + 2.5 * e2[i];
  ConditioningStack s1 = build_conditioning(l, e1, masks, 2, 16, 16);
  ConditioningStack s2 = build_conditioning(l, e2, masks, 2, 16, 16);
  ConditioningStack ss = build_conditioning(l, sum, masks, 2, 16, 16);
  const long plane = 16 * 16;
  for (long i = 0; i < 3 * plane; ++i)
    CHECK(std::abs(ss.tensor[i] - (s1.tensor[i] + 2.5 * s2.tensor[i])) < 1e-6);
}

TEST_CASE("masked_embedding_map gradients match finite differences") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> g(0, 1);
  Layout l = make_layout({{0, {0.1, 0.2, 0.6, 0.7}}, {1, {0.4, 0.3, 0.9, 0.8}}});
  Tensor emb({2, 2}), masks({2, 3, 3}), weights({1, 2, 8, 8});
  for (long i = 0; i < emb.size(); ++i) emb[i] = g(gen);
  for (long i = 0; i < masks.size(); ++i) masks[i] = 0.5 + 0.4 * std::tanh(g(gen));
  for (long i = 0; i < weights.size(); ++i) weights[i] = g(gen);

  Var ve = Var::grad_leaf(emb.clone());
  Var vm = Var::grad_leaf(masks.clone());
  Var out = nn::sum_all(nn::mul(masked_embedding_map(l, ve, vm, 8, 8), Var(weights)));
  nn::backward(out);

  auto eval = [&](Tensor& target, long j, double delta) {
    target[j] += delta;
    Var o = nn::sum_all(nn::mul(masked_embedding_map(l, Var(emb), Var(masks), 8, 8), Var(weights)));
    target[j] -= delta;
    return o.value().item();
  };
  const double h = 1e-6;
  for (long j = 0; j < emb.size(); ++j) {
    const double numeric = (eval(emb, j, h) - eval(emb, j, -h)) / (2 * h);
    CHECK(std::abs(numeric - ve.grad()[j]) < 1e-6 * std::max(1.0, std::abs(numeric)));
  }
  for (long j = 0; j < masks.size(); ++j) {
    const double numeric = (eval(masks, j, h) - eval(masks, j, -h)) / (2 * h);
    CHECK(std::abs(numeric - vm.grad()[j]) < 1e-6 * std::max(1.0, std::abs(numeric)));
  }
}

TEST_CASE("conditioning_stack_var can drop the boundary channel") {
  Layout l = make_layout({{0, {0.2, 0.2, 0.7, 0.7}}});
  Tensor emb = Tensor::full({1, 2}, 1.0);
  Tensor masks = Tensor::full({1, 4, 4}, 1.0);
  Var with = conditioning_stack_var(l, Var(emb), Var(masks), 2, 8, 8, true);
  Var without = conditioning_stack_var(l, Var(emb), Var(masks), 2, 8, 8, false);
  REQUIRE(with.shape() == std::vector<int>({1, 2 + 2 + 1, 8, 8}));
  const long plane = 64;
  double bsum = 0, bsum2 = 0;
  for (long i = 0; i < plane; ++i) {
    bsum += with.value()[4 * plane + i];
    bsum2 += without.value()[4 * plane + i];
  }
  CHECK(bsum > 0);
  CHECK(bsum2 == 0.0);
}

TEST_CASE("layout JSON round trip and validation errors") {
  Layout l = make_layout({{2, {0.1, 0.2, 0.3, 0.4}}, {0, {0.5, 0.5, 0.9, 0.8}}}, 64, 128);
  nlohmann::json j = layout_to_json(l);
  Layout back = layout_from_json(j);
  CHECK(back.canvas_h == 64);
  CHECK(back.canvas_w == 128);
  REQUIRE(back.objects.size() == 2);
  CHECK(back.objects[0].class_id == 2);
  CHECK(back.objects[1].box.x1 == doctest::Approx(0.9));

  nlohmann::json bad = j;
  bad["objects"][0]["box"] = {0.2, 0.2, 0.1, 0.9};
  CHECK_THROWS_WITH_AS(layout_from_json(bad, "fixture.json"),
                       doctest::Contains("x0 < x1"), std::invalid_argument);

  Layout empty;
  empty.canvas_h = empty.canvas_w = 64;
  CHECK_THROWS(empty.validate(3));
  Layout badcanvas = l;
  badcanvas.canvas_h = 48;
  CHECK_THROWS(badcanvas.validate(3));
}
