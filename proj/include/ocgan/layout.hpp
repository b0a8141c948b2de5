#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ocgan/nn/autodiff.hpp"
#include "ocgan/nn/tensor.hpp"

namespace ocgan {

/// Axis-aligned box in normalized [0,1] coordinates, x0<x1, y0<y1.
struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::pair<double, double> center() const { return {(x0 + x1) / 2, (y0 + y1) / 2}; }
  double area() const { return (x1 - x0) * (y1 - y0); }
  void validate() const;  // throws std::invalid_argument
};

struct ObjectInstance {
  int class_id = 0;
  BoundingBox box;
  int instance_index = 0;  // position in layout; distinguishes same-class objects
};

/// The model's sole semantic input: object classes + boxes on a canvas.
struct Layout {
  std::vector<ObjectInstance> objects;
  int canvas_h = 0, canvas_w = 0;

  void validate(int num_classes, int max_objects = 30) const;
};

/// Half-open pixel extent [y0,y1) x [x0,x1) of a normalized box.
/// Rounding: floor on the low edge, ceil on the high edge, clamped;
/// a degenerate box collapses to one pixel at its rounded center.
struct PixelBox {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  int height() const { return y1 - y0; }
  int width() const { return x1 - x0; }
};

PixelBox pixel_extent(const BoundingBox& box, int raster_h, int raster_w);

/// Per-pixel condition for the generator: masked object embeddings,
/// one-hot class raster, and the instance-boundary channel.
struct ConditioningStack {
  nn::Tensor tensor;  // (E + C + 1, H, W)
  int embed_dim = 0;
  int num_classes = 0;

  struct Block {
    std::string name;
    int begin = 0;
    int size = 0;
  };
  std::vector<Block> blocks() const;
};

/// Binary class raster (C,H,W): cell (c,y,x)=1 iff an object of class c
/// covers pixel (y,x).
nn::Tensor rasterize_onehot(const Layout& layout, int num_classes, int raster_h, int raster_w);

/// Union of all 1-pixel-thick box perimeters, (1,H,W) in {0,1}.
nn::Tensor instance_boundary_map(const Layout& layout, int raster_h, int raster_w);

/// Bilinear resize of each object's pixel-box region to out_size x out_size.
/// `image` is (3,H,W) matching layout.canvas.
std::vector<nn::Tensor> crop_objects(const nn::Tensor& image, const Layout& layout, int out_size);

/// Paste a crop back into its pixel box (bilinear resize to the box extent).
void paste_crop(nn::Tensor& image, const nn::Tensor& crop, const PixelBox& pb);

/// Assemble the full conditioning stack. `object_embeddings` is (O,E),
/// `soft_masks` is (O,h,w) with values in [0,1]. Overlapping objects sum
/// in the embedding block.
ConditioningStack build_conditioning(const Layout& layout, const nn::Tensor& object_embeddings,
                                     const nn::Tensor& soft_masks, int num_classes, int raster_h,
                                     int raster_w);

/// Differentiable masked-object-embedding block, (1,E,H,W); gradients
/// flow into both embeddings and masks.
nn::Var masked_embedding_map(const Layout& layout, const nn::Var& embeddings,
                             const nn::Var& masks, int raster_h, int raster_w);

/// Differentiable full stack for one sample, (1, E+C+1, H, W). With
/// `include_boundary` false the boundary channel is all zeros.
nn::Var conditioning_stack_var(const Layout& layout, const nn::Var& embeddings,
                               const nn::Var& masks, int num_classes, int raster_h, int raster_w,
                               bool include_boundary = true);

// Layout JSON schema (version 1):
//   { "canvas": [H, W], "objects": [ { "class": int, "box": [x0,y0,x1,y1] } ] }
nlohmann::json layout_to_json(const Layout& layout);
Layout layout_from_json(const nlohmann::json& j, const std::string& context = "");

}  // namespace ocgan
