#include "ocgan/layout.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ocgan/nn/ops.hpp"

namespace ocgan {

using nn::Scalar;
using nn::Tensor;
using nn::Var;

void BoundingBox::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(x0) || !in01(y0) || !in01(x1) || !in01(y1))
    throw std::invalid_argument("box coordinate outside [0,1]");
  if (!(x0 < x1)) throw std::invalid_argument("box violates x0 < x1");
  if (!(y0 < y1)) throw std::invalid_argument("box violates y0 < y1");
}

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void Layout::validate(int num_classes, int max_objects) const {
  if (objects.empty()) throw std::invalid_argument("layout has no objects");
  if (static_cast<int>(objects.size()) > max_objects)
    throw std::invalid_argument("layout exceeds max_objects=" + std::to_string(max_objects));
  if (!power_of_two(canvas_h) || !power_of_two(canvas_w) || canvas_h < 32 || canvas_w < 32)
    throw std::invalid_argument("canvas dimensions must be powers of two >= 32");
  std::set<int> seen;
  for (const auto& o : objects) {
    o.box.validate();
    if (o.class_id < 0 || o.class_id >= num_classes)
      throw std::invalid_argument("class id " + std::to_string(o.class_id) +
                                  " outside vocabulary of " + std::to_string(num_classes));
    if (!seen.insert(o.instance_index).second)
      throw std::invalid_argument("duplicate instance_index in layout");
  }
}

PixelBox pixel_extent(const BoundingBox& box, int raster_h, int raster_w) {
  PixelBox pb;
  pb.x0 = std::clamp(static_cast<int>(std::floor(box.x0 * raster_w)), 0, raster_w);
  pb.x1 = std::clamp(static_cast<int>(std::ceil(box.x1 * raster_w)), 0, raster_w);
  pb.y0 = std::clamp(static_cast<int>(std::floor(box.y0 * raster_h)), 0, raster_h);
  pb.y1 = std::clamp(static_cast<int>(std::ceil(box.y1 * raster_h)), 0, raster_h);
  // degenerate extents collapse to one pixel at the rounded center
  if (pb.x0 >= pb.x1) {
    const int cx = std::clamp(static_cast<int>(std::floor((box.x0 + box.x1) / 2 * raster_w)), 0,
                              raster_w - 1);
    pb.x0 = cx;
    pb.x1 = cx + 1;
  }
  if (pb.y0 >= pb.y1) {
    const int cy = std::clamp(static_cast<int>(std::floor((box.y0 + box.y1) / 2 * raster_h)), 0,
                              raster_h - 1);
    pb.y0 = cy;
    pb.y1 = cy + 1;
  }
  return pb;
}

std::vector<ConditioningStack::Block> ConditioningStack::blocks() const {
  return {{"masked_object_embeddings", 0, embed_dim},
          {"onehot_layout", embed_dim, num_classes},
          {"instance_boundaries", embed_dim + num_classes, 1}};
}

Tensor rasterize_onehot(const Layout& layout, int num_classes, int raster_h, int raster_w) {
  if (raster_h <= 0 || raster_w <= 0) throw std::invalid_argument("raster size must be positive");
  Tensor out({num_classes, raster_h, raster_w});
  for (const auto& o : layout.objects) {
    const PixelBox pb = pixel_extent(o.box, raster_h, raster_w);
    for (int y = pb.y0; y < pb.y1; ++y)
      for (int x = pb.x0; x < pb.x1; ++x) out.at(o.class_id, y, x) = 1.0;
  }
  return out;
}

Tensor instance_boundary_map(const Layout& layout, int raster_h, int raster_w) {
  if (raster_h <= 0 || raster_w <= 0) throw std::invalid_argument("raster size must be positive");
  Tensor out({1, raster_h, raster_w});
  for (const auto& o : layout.objects) {
    const PixelBox pb = pixel_extent(o.box, raster_h, raster_w);
    for (int x = pb.x0; x < pb.x1; ++x) {
      out.at(0, pb.y0, x) = 1.0;
      out.at(0, pb.y1 - 1, x) = 1.0;
    }
    for (int y = pb.y0; y < pb.y1; ++y) {
      out.at(0, y, pb.x0) = 1.0;
      out.at(0, y, pb.x1 - 1) = 1.0;
    }
  }
  return out;
}

std::vector<Tensor> crop_objects(const Tensor& image, const Layout& layout, int out_size) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("crop_objects: image must be (3,H,W)");
  if (image.dim(1) != layout.canvas_h || image.dim(2) != layout.canvas_w)
    throw std::invalid_argument("crop_objects: image does not match layout canvas");
  std::vector<Tensor> crops;
  crops.reserve(layout.objects.size());
  for (const auto& o : layout.objects) {
    const PixelBox pb = pixel_extent(o.box, image.dim(1), image.dim(2));
    Tensor region({3, pb.height(), pb.width()});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < pb.height(); ++y)
        for (int x = 0; x < pb.width(); ++x)
          region.at(c, y, x) = image.at(c, pb.y0 + y, pb.x0 + x);
    crops.push_back(nn::bilinear_resize(region, out_size, out_size));
  }
  return crops;
}

void paste_crop(Tensor& image, const Tensor& crop, const PixelBox& pb) {
  Tensor resized = nn::bilinear_resize(crop, pb.height(), pb.width());
  for (int c = 0; c < crop.dim(0); ++c)
    for (int y = 0; y < pb.height(); ++y)
      for (int x = 0; x < pb.width(); ++x)
        image.at(c, pb.y0 + y, pb.x0 + x) = resized.at(c, y, x);
}

namespace {

struct Tap {
  int lo, hi;
  Scalar frac;
};

// Center-aligned sampling, clamped to the valid range; identity when
// in_len == out_len.
std::vector<Tap> linear_taps(int in_len, int out_len) {
  std::vector<Tap> taps(out_len);
  for (int o = 0; o < out_len; ++o) {
    Scalar s = (o + 0.5) * in_len / out_len - 0.5;
    s = std::clamp(s, 0.0, static_cast<Scalar>(in_len - 1));
    const int lo = static_cast<int>(std::floor(s));
    taps[o] = {lo, std::min(lo + 1, in_len - 1), s - lo};
  }
  return taps;
}

// resized(y,x) of a (h,w) mask to (bh,bw)
Tensor resize_mask(const Tensor& masks, int obj, int bh, int bw) {
  const int h = masks.dim(1), w = masks.dim(2);
  const auto ty = linear_taps(h, bh), tx = linear_taps(w, bw);
  Tensor out({bh, bw});
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      const auto& a = ty[y];
      const auto& b = tx[x];
      out.at(y, x) = (1 - a.frac) * ((1 - b.frac) * masks.at(obj, a.lo, b.lo) +
                                     b.frac * masks.at(obj, a.lo, b.hi)) +
                     a.frac * ((1 - b.frac) * masks.at(obj, a.hi, b.lo) +
                               b.frac * masks.at(obj, a.hi, b.hi));
    }
  return out;
}

void check_conditioning_inputs(const Layout& layout, const Tensor& emb, const Tensor& masks) {
  const int n = static_cast<int>(layout.objects.size());
  if (emb.ndim() != 2 || emb.dim(0) != n)
    throw std::invalid_argument("build_conditioning: need one embedding per object");
  if (masks.ndim() != 3 || masks.dim(0) != n)
    throw std::invalid_argument("build_conditioning: need one soft mask per object");
}

Tensor masked_embedding_forward(const Layout& layout, const Tensor& emb, const Tensor& masks,
                                int H, int W) {
  const int E = emb.dim(1);
  Tensor out({1, E, H, W});
  for (size_t o = 0; o < layout.objects.size(); ++o) {
    const PixelBox pb = pixel_extent(layout.objects[o].box, H, W);
    const Tensor m = resize_mask(masks, static_cast<int>(o), pb.height(), pb.width());
    for (int e = 0; e < E; ++e) {
      const Scalar ev = emb.at(static_cast<int>(o), e);
      for (int y = 0; y < pb.height(); ++y)
        for (int x = 0; x < pb.width(); ++x)
          out.at(0, e, pb.y0 + y, pb.x0 + x) += ev * m.at(y, x);
    }
  }
  return out;
}

}  // namespace

ConditioningStack build_conditioning(const Layout& layout, const Tensor& object_embeddings,
                                     const Tensor& soft_masks, int num_classes, int raster_h,
                                     int raster_w) {
  check_conditioning_inputs(layout, object_embeddings, soft_masks);
  const int E = object_embeddings.dim(1);
  ConditioningStack stack;
  stack.embed_dim = E;
  stack.num_classes = num_classes;
  stack.tensor = Tensor({E + num_classes + 1, raster_h, raster_w});
  const Tensor emb_block =
      masked_embedding_forward(layout, object_embeddings, soft_masks, raster_h, raster_w);
  const Tensor onehot = rasterize_onehot(layout, num_classes, raster_h, raster_w);
  const Tensor boundary = instance_boundary_map(layout, raster_h, raster_w);
  Scalar* dst = stack.tensor.data();
  const long plane = static_cast<long>(raster_h) * raster_w;
  std::copy(emb_block.data(), emb_block.data() + E * plane, dst);
  std::copy(onehot.data(), onehot.data() + num_classes * plane, dst + E * plane);
  std::copy(boundary.data(), boundary.data() + plane, dst + (E + num_classes) * plane);
  return stack;
}

Var masked_embedding_map(const Layout& layout, const Var& embeddings, const Var& masks,
                         int raster_h, int raster_w) {
  check_conditioning_inputs(layout, embeddings.value(), masks.value());
  Tensor out =
      masked_embedding_forward(layout, embeddings.value(), masks.value(), raster_h, raster_w);
  const Layout lay = layout;  // geometry snapshot for the backward pass
  const int H = raster_h, W = raster_w;
  return Var::make(
      std::move(out), {embeddings.node(), masks.node()}, [lay, H, W](nn::Node& self) {
        nn::Node& ne = *self.inputs[0];
        nn::Node& nm = *self.inputs[1];
        const Tensor& emb = ne.value;
        const Tensor& masks_v = nm.value;
        const int E = emb.dim(1);
        const int mh = masks_v.dim(1), mw = masks_v.dim(2);
        const Tensor& dy = self.grad;
        for (size_t o = 0; o < lay.objects.size(); ++o) {
          const PixelBox pb = pixel_extent(lay.objects[o].box, H, W);
          const Tensor m = resize_mask(masks_v, static_cast<int>(o), pb.height(), pb.width());
          if (ne.requires_grad) {
            Scalar* de = ne.ensure_grad().data() + static_cast<long>(o) * E;
            for (int e = 0; e < E; ++e) {
              Scalar s = 0;
              for (int y = 0; y < pb.height(); ++y)
                for (int x = 0; x < pb.width(); ++x)
                  s += dy.at(0, e, pb.y0 + y, pb.x0 + x) * m.at(y, x);
              de[e] += s;
            }
          }
          if (nm.requires_grad) {
            // adjoint of the bilinear resize, accumulated per mask tap
            Tensor dres({pb.height(), pb.width()});
            for (int y = 0; y < pb.height(); ++y)
              for (int x = 0; x < pb.width(); ++x) {
                Scalar s = 0;
                for (int e = 0; e < E; ++e)
                  s += emb.at(static_cast<int>(o), e) * dy.at(0, e, pb.y0 + y, pb.x0 + x);
                dres.at(y, x) = s;
              }
            const auto ty = linear_taps(mh, pb.height());
            const auto tx = linear_taps(mw, pb.width());
            Tensor& gm = nm.ensure_grad();
            for (int y = 0; y < pb.height(); ++y)
              for (int x = 0; x < pb.width(); ++x) {
                const auto& a = ty[y];
                const auto& b = tx[x];
                const Scalar g = dres.at(y, x);
                gm.at(static_cast<int>(o), a.lo, b.lo) += (1 - a.frac) * (1 - b.frac) * g;
                gm.at(static_cast<int>(o), a.lo, b.hi) += (1 - a.frac) * b.frac * g;
                gm.at(static_cast<int>(o), a.hi, b.lo) += a.frac * (1 - b.frac) * g;
                gm.at(static_cast<int>(o), a.hi, b.hi) += a.frac * b.frac * g;
              }
          }
        }
      });
}

Var conditioning_stack_var(const Layout& layout, const Var& embeddings, const Var& masks,
                           int num_classes, int raster_h, int raster_w, bool include_boundary) {
  Var emb_block = masked_embedding_map(layout, embeddings, masks, raster_h, raster_w);
  Tensor onehot = rasterize_onehot(layout, num_classes, raster_h, raster_w)
                      .reshaped({1, num_classes, raster_h, raster_w});
  Tensor boundary = include_boundary
                        ? instance_boundary_map(layout, raster_h, raster_w)
                              .reshaped({1, 1, raster_h, raster_w})
                        : Tensor({1, 1, raster_h, raster_w});
  return nn::concat_channels({emb_block, Var(std::move(onehot)), Var(std::move(boundary))});
}

nlohmann::json layout_to_json(const Layout& layout) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["canvas"] = {layout.canvas_h, layout.canvas_w};
  j["objects"] = nlohmann::json::array();
  for (const auto& o : layout.objects)
    j["objects"].push_back(
        {{"class", o.class_id}, {"box", {o.box.x0, o.box.y0, o.box.x1, o.box.y1}}});
  return j;
}

Layout layout_from_json(const nlohmann::json& j, const std::string& context) {
  auto fail = [&context](const std::string& msg) {
    throw std::invalid_argument(context.empty() ? msg : context + ": " + msg);
  };
  Layout layout;
  try {
    const auto& canvas = j.at("canvas");
    layout.canvas_h = canvas.at(0).get<int>();
    layout.canvas_w = canvas.at(1).get<int>();
    int idx = 0;
    for (const auto& jo : j.at("objects")) {
      ObjectInstance o;
      o.class_id = jo.at("class").get<int>();
      const auto& b = jo.at("box");
      o.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
               b.at(3).get<double>()};
      o.instance_index = idx++;
      layout.objects.push_back(o);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed layout JSON: ") + e.what());
  }
  for (const auto& o : layout.objects) {
    try {
      o.box.validate();
    } catch (const std::invalid_argument& e) {
      fail("object " + std::to_string(o.instance_index) + ": " + e.what());
    }
  }
  return layout;
}

}  // namespace ocgan
