// Synthetic shapes detection dataset: deterministic generator, VOC-style XML
// annotation reader/writer, split manifests, and split loading.
//
// Design notes that matter for reproducibility:
//  - Every image is rendered from its own engine seeded with
//    derive_seed(derive_seed(seed, "synthetic-image"), index), so generation
//    order (or parallelism) cannot change pixel content.
//  - Annotation boxes are quantized to the pixel grid *at generation time*
//    using the same integer convention the XML writer/reader use. An
//    annotation loaded back from disk is therefore bit-identical to the
//    in-memory one.
//  - VOC coordinates are 1-based inclusive; min coordinates have 1 subtracted
//    on read, max coordinates are used as-is, then both are normalized by the
//    declared image size.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/boxes.hpp"
#include "mixdet/detector.hpp"
#include "mixdet/pngio.hpp"
#include "mixdet/random.hpp"
#include "mixdet/xml.hpp"

namespace mixdet {

/// Parameters of the synthetic benchmark generator. Same spec + seed gives a
/// bit-identical dataset.
struct SyntheticSpec {
  int image_size = 96;
  std::vector<std::string> class_names = {"circle", "square", "triangle"};
  int min_objects = 1;  // 0 is allowed (background-only images) for diagnostics
  int max_objects = 3;
  double min_box = 0.18;  // object side as a fraction of image size
  double max_box = 0.45;
  double max_overlap_iou = 0.2;
  double color_jitter = 0.08;  // per-channel uniform jitter around class colors
  std::uint64_t seed = 1;

  void validate() const {
    if (image_size < 8) throw std::invalid_argument("SyntheticSpec: image_size must be >= 8");
    if (class_names.empty() || class_names.size() > 3) {
      throw std::invalid_argument("SyntheticSpec: class_names must list 1..3 shape classes");
    }
    if (min_objects < 0 || max_objects < min_objects) {
      throw std::invalid_argument("SyntheticSpec: need 0 <= min_objects <= max_objects");
    }
    if (!(min_box > 0.0) || !(max_box >= min_box) || !(max_box < 1.0)) {
      throw std::invalid_argument("SyntheticSpec: need 0 < min_box <= max_box < 1");
    }
    if (max_overlap_iou < 0.0 || max_overlap_iou >= 1.0) {
      throw std::invalid_argument("SyntheticSpec: max_overlap_iou must be in [0, 1)");
    }
    if (color_jitter < 0.0) throw std::invalid_argument("SyntheticSpec: color_jitter must be >= 0");
  }
};

struct GeneratedImage {
  ImageU8 image;
  Annotation annotation;  // boxes normalized to [0,1], quantized to the pixel grid
};

namespace detail {

// Class palette, indexed by 0-based class index (circle, square, triangle).
inline constexpr double kShapeColors[3][3] = {
    {0.85, 0.18, 0.18},  // circle: warm red
    {0.15, 0.80, 0.20},  // square: green
    {0.20, 0.35, 0.90},  // triangle: blue
};

struct ShapeGeom {
  int class_index = 0;  // 0 circle, 1 square, 2 triangle
  double cx = 0.0, cy = 0.0, half = 0.0;  // pixel units; half-extent of the bbox
  double color[3] = {0.0, 0.0, 0.0};

  bool inside(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    switch (class_index) {
      case 0:
        return dx * dx + dy * dy <= half * half;
      case 1:
        return std::abs(dx) <= half && std::abs(dy) <= half;
      default: {
        // Up-pointing isoceles triangle inscribed in the bbox: vertices
        // A=(0,-h), B=(-h,h), C=(h,h) in centered coordinates. Interior points
        // have non-positive cross products against all three directed edges.
        const double h = half;
        const double ab = -h * (dy + h) - 2.0 * h * dx;
        const double bc = 2.0 * h * (dy - h);
        const double ca = -h * (dy - h) + 2.0 * h * (dx - h);
        return ab <= 0.0 && bc <= 0.0 && ca <= 0.0;
      }
    }
  }

  /// Fraction of the pixel's 3x3 subsample grid covered by the shape.
  double coverage(int px, int py) const {
    static constexpr double kSub[3] = {1.0 / 6.0, 3.0 / 6.0, 5.0 / 6.0};
    int hits = 0;
    for (int sy = 0; sy < 3; ++sy) {
      for (int sx = 0; sx < 3; ++sx) {
        if (inside(px + kSub[sx], py + kSub[sy])) ++hits;
      }
    }
    return hits / 9.0;
  }
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kSqrt2 = 1.4142135623730950488016887242097;

/// Fill the CHW double buffer with a muted background (values stay below the
/// saturated shape palette). Draw order is fixed: family pick, family
/// parameters, then one noise draw per pixel in row-major order.
inline void render_background(const SyntheticSpec& spec, RandomEngine& rng,
                              std::vector<double>& buf) {
  const int size = spec.image_size;
  const bool gradient = rng.uniform_int(2) == 1;
  if (gradient) {
    double c0[3], c1[3];
    for (double& v : c0) v = rng.uniform(0.08, 0.45);
    for (double& v : c1) v = rng.uniform(0.08, 0.45);
    const double phi = rng.uniform(0.0, kTwoPi);
    const double dir_x = std::cos(phi);
    const double dir_y = std::sin(phi);
    const double inv_span = size > 1 ? 1.0 / (size - 1) : 0.0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double ax = 2.0 * x * inv_span - 1.0;
        const double ay = 2.0 * y * inv_span - 1.0;
        const double t = clamp01((ax * dir_x + ay * dir_y) / (2.0 * kSqrt2) + 0.5);
        const double noise = rng.uniform(-0.02, 0.02);
        for (int c = 0; c < 3; ++c) {
          buf[(c * size + y) * size + x] = clamp01(c0[c] + (c1[c] - c0[c]) * t + noise);
        }
      }
    }
  } else {
    const double base = rng.uniform(0.12, 0.40);
    double tint[3];
    for (double& v : tint) v = rng.uniform(-0.06, 0.06);
    const double amp = rng.uniform(0.02, 0.08);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double noise = rng.uniform(-amp, amp);
        for (int c = 0; c < 3; ++c) {
          buf[(c * size + y) * size + x] = clamp01(base + tint[c] + noise);
        }
      }
    }
  }
}

}  // namespace detail

/// Render one image of the synthetic dataset. `index` selects the per-image
/// random stream, so any subset can be generated independently.
inline GeneratedImage generate_image(const SyntheticSpec& spec, std::uint64_t index) {
  spec.validate();
  const int size = spec.image_size;
  RandomEngine rng(derive_seed(derive_seed(spec.seed, stream_tag("synthetic-image")), index));

  std::vector<double> buf(3 * static_cast<std::size_t>(size) * size, 0.0);
  detail::render_background(spec, rng, buf);

  const int span = spec.max_objects - spec.min_objects + 1;
  const int count = spec.min_objects + static_cast<int>(rng.uniform_int(span));

  // Place objects with bounded rejection: a candidate overlapping an already
  // placed box above max_overlap_iou is redrawn; after 100 failed candidates
  // the object is skipped (never silently accepted in violation).
  std::vector<detail::ShapeGeom> shapes;
  std::vector<Box> quantized;
  Annotation annotation;
  const double margin = 1.0;
  for (int obj = 0; obj < count; ++obj) {
    const int class_index = static_cast<int>(rng.uniform_int(spec.class_names.size()));
    const double side = rng.uniform(spec.min_box, spec.max_box) * size;
    const double half = 0.5 * side;
    const double lo = margin + half;
    const double hi = size - margin - half;
    if (!(hi > lo)) {
      throw std::invalid_argument("generate_image: max_box leaves no room inside the margins");
    }

    bool placed = false;
    detail::ShapeGeom geom;
    Box qbox;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double cx = rng.uniform(lo, hi);
      const double cy = rng.uniform(lo, hi);
      const double px0 = std::max(0.0, std::floor(cx - half));
      const double py0 = std::max(0.0, std::floor(cy - half));
      const double px1 = std::min(static_cast<double>(size), std::ceil(cx + half));
      const double py1 = std::min(static_cast<double>(size), std::ceil(cy + half));
      const Box candidate{px0 / size, py0 / size, px1 / size, py1 / size};
      bool ok = true;
      for (const Box& other : quantized) {
        if (iou(candidate, other) > spec.max_overlap_iou) {
          ok = false;
          break;
        }
      }
      if (ok) {
        geom.class_index = class_index;
        geom.cx = cx;
        geom.cy = cy;
        geom.half = half;
        qbox = candidate;
        placed = true;
      }
    }
    if (!placed) continue;  // crowded image: this object is skipped

    for (int c = 0; c < 3; ++c) {
      geom.color[c] = detail::clamp01(detail::kShapeColors[geom.class_index][c] +
                                      rng.uniform(-spec.color_jitter, spec.color_jitter));
    }
    shapes.push_back(geom);
    quantized.push_back(qbox);
    annotation.objects.push_back(GtObject{geom.class_index + 1, qbox});
  }

  // Composite shapes over the background in placement order with antialiased
  // coverage, restricted to each shape's quantized pixel extent.
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const detail::ShapeGeom& geom = shapes[s];
    const Box& q = quantized[s];
    const int px0 = static_cast<int>(std::lround(q.x0 * size));
    const int py0 = static_cast<int>(std::lround(q.y0 * size));
    const int px1 = static_cast<int>(std::lround(q.x1 * size));
    const int py1 = static_cast<int>(std::lround(q.y1 * size));
    for (int y = py0; y < py1; ++y) {
      for (int x = px0; x < px1; ++x) {
        const double cov = geom.coverage(x, y);
        if (cov <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          double& v = buf[(c * size + y) * size + x];
          v = v * (1.0 - cov) + geom.color[c] * cov;
        }
      }
    }
  }

  GeneratedImage out;
  out.image = ImageU8(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.image.at(y, x, c) = static_cast<std::uint8_t>(
            std::lround(detail::clamp01(buf[(c * size + y) * size + x]) * 255.0));
      }
    }
  }
  out.annotation = std::move(annotation);
  return out;
}

/// Generate images 0..n-1 of the dataset.
inline std::vector<GeneratedImage> generate(const SyntheticSpec& spec, int n) {
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  std::vector<GeneratedImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(generate_image(spec, static_cast<std::uint64_t>(i)));
  return out;
}

// ---------------------------------------------------------------------------
// VOC-style XML annotations
// ---------------------------------------------------------------------------

/// Serialize an annotation with normalized boxes into VOC XML, converting to
/// 1-based inclusive integer pixel coordinates.
inline std::string voc_xml_string(const Annotation& annotation, const std::string& filename,
                                  int width, int height,
                                  const std::vector<std::string>& class_names) {
  std::ostringstream out;
  out << "<annotation>\n";
  out << "  <folder>images</folder>\n";
  out << "  <filename>" << xml_escape(filename) << "</filename>\n";
  out << "  <size>\n";
  out << "    <width>" << width << "</width>\n";
  out << "    <height>" << height << "</height>\n";
  out << "    <depth>3</depth>\n";
  out << "  </size>\n";
  for (const GtObject& obj : annotation.objects) {
    if (obj.class_id < 1 || obj.class_id > static_cast<int>(class_names.size())) {
      throw std::invalid_argument("voc_xml_string: class_id " + std::to_string(obj.class_id) +
                                  " has no name (1.." + std::to_string(class_names.size()) + ")");
    }
    const long long xmin = std::llround(obj.box.x0 * width) + 1;
    const long long ymin = std::llround(obj.box.y0 * height) + 1;
    const long long xmax = std::llround(obj.box.x1 * width);
    const long long ymax = std::llround(obj.box.y1 * height);
    out << "  <object>\n";
    out << "    <name>" << xml_escape(class_names[obj.class_id - 1]) << "</name>\n";
    out << "    <difficult>0</difficult>\n";
    out << "    <bndbox>\n";
    out << "      <xmin>" << xmin << "</xmin>\n";
    out << "      <ymin>" << ymin << "</ymin>\n";
    out << "      <xmax>" << xmax << "</xmax>\n";
    out << "      <ymax>" << ymax << "</ymax>\n";
    out << "    </bndbox>\n";
    out << "  </object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

struct VocRecord {
  std::string filename;
  int width = 0;
  int height = 0;
  Annotation annotation;
  int num_difficult = 0;  // objects flagged difficult (excluded unless requested)
};

namespace detail {

inline long long parse_int_element(const XmlElement& el) {
  const std::string& text = el.text;
  if (text.empty()) throw std::runtime_error("voc: element <" + el.name + "> is empty");
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("voc: element <" + el.name + "> is not an integer: '" + text + "'");
  }
  if (used != text.size()) {
    throw std::runtime_error("voc: element <" + el.name + "> is not an integer: '" + text + "'");
  }
  return value;
}

}  // namespace detail

/// Parse a VOC annotation document. Pixel coordinates are normalized by the
/// declared size under the 1-based inclusive convention (min coordinates have
/// 1 subtracted; max coordinates are used as-is). `difficult` objects are
/// excluded unless include_difficult is set.
inline VocRecord read_voc_xml_string(const std::string& xml,
                                     const std::vector<std::string>& class_names,
                                     bool include_difficult = false) {
  const XmlElement root = parse_xml(xml);
  if (root.name != "annotation") {
    throw std::runtime_error("voc: expected root element <annotation>, found <" + root.name + ">");
  }

  VocRecord rec;
  if (const XmlElement* fn = root.child("filename")) rec.filename = fn->text;

  const XmlElement& size_el = root.require("size");
  rec.width = static_cast<int>(detail::parse_int_element(size_el.require("width")));
  rec.height = static_cast<int>(detail::parse_int_element(size_el.require("height")));
  if (rec.width <= 0 || rec.height <= 0) {
    throw std::runtime_error("voc: element <size> must declare positive width and height");
  }

  for (const XmlElement* obj : root.children_named("object")) {
    const XmlElement& name_el = obj->require("name");
    int class_id = 0;
    for (std::size_t i = 0; i < class_names.size(); ++i) {
      if (class_names[i] == name_el.text) {
        class_id = static_cast<int>(i) + 1;
        break;
      }
    }
    if (class_id == 0) {
      throw std::runtime_error("voc: unknown class '" + name_el.text + "' in element <name>");
    }

    bool difficult = false;
    if (const XmlElement* diff = obj->child("difficult")) {
      difficult = detail::parse_int_element(*diff) != 0;
    }
    if (difficult && !include_difficult) {
      ++rec.num_difficult;
      continue;
    }

    const XmlElement& bb = obj->require("bndbox");
    const long long xmin = detail::parse_int_element(bb.require("xmin"));
    const long long ymin = detail::parse_int_element(bb.require("ymin"));
    const long long xmax = detail::parse_int_element(bb.require("xmax"));
    const long long ymax = detail::parse_int_element(bb.require("ymax"));
    if (xmin < 1 || ymin < 1 || xmax < xmin || ymax < ymin || xmax > rec.width ||
        ymax > rec.height) {
      throw std::runtime_error("voc: element <bndbox> out of bounds: (" + std::to_string(xmin) +
                               "," + std::to_string(ymin) + "," + std::to_string(xmax) + "," +
                               std::to_string(ymax) + ") in " + std::to_string(rec.width) + "x" +
                               std::to_string(rec.height));
    }
    GtObject gt;
    gt.class_id = class_id;
    gt.box = Box{static_cast<double>(xmin - 1) / rec.width,
                 static_cast<double>(ymin - 1) / rec.height,
                 static_cast<double>(xmax) / rec.width,
                 static_cast<double>(ymax) / rec.height};
    rec.annotation.objects.push_back(gt);
  }
  return rec;
}

inline VocRecord read_voc_xml(const std::string& path,
                              const std::vector<std::string>& class_names,
                              bool include_difficult = false) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("voc: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  try {
    return read_voc_xml_string(buf.str(), class_names, include_difficult);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + path + ")");
  }
}

// ---------------------------------------------------------------------------
// Dataset directory layout: images/<id>.png, annotations/<id>.xml,
// splits.json, dataset.json
// ---------------------------------------------------------------------------

struct SplitManifest {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  std::vector<std::string> eval_ids;
};

inline std::string format_image_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05llu", static_cast<unsigned long long>(index));
  return buf;
}

inline void write_split_manifest(const std::string& dir, const SplitManifest& manifest) {
  nlohmann::json j;
  j["labeled"] = manifest.labeled;
  j["unlabeled"] = manifest.unlabeled;
  j["eval"] = manifest.eval_ids;
  std::ofstream f(dir + "/splits.json", std::ios::trunc);
  if (!f) throw std::runtime_error("write_split_manifest: cannot open " + dir + "/splits.json");
  f << j.dump(2) << "\n";
}

inline SplitManifest read_split_manifest(const std::string& dir) {
  std::ifstream f(dir + "/splits.json");
  if (!f) throw std::runtime_error("read_split_manifest: cannot open " + dir + "/splits.json");
  nlohmann::json j;
  f >> j;
  SplitManifest m;
  m.labeled = j.at("labeled").get<std::vector<std::string>>();
  m.unlabeled = j.at("unlabeled").get<std::vector<std::string>>();
  m.eval_ids = j.at("eval").get<std::vector<std::string>>();
  return m;
}

struct DatasetInfo {
  int image_size = 0;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
};

inline DatasetInfo read_dataset_info(const std::string& dir) {
  std::ifstream f(dir + "/dataset.json");
  if (!f) throw std::runtime_error("read_dataset_info: cannot open " + dir + "/dataset.json");
  nlohmann::json j;
  f >> j;
  DatasetInfo info;
  info.image_size = j.at("image_size").get<int>();
  info.class_names = j.at("class_names").get<std::vector<std::string>>();
  info.seed = j.at("seed").get<std::uint64_t>();
  return info;
}

/// Generate and write a full dataset: labeled ids first, then unlabeled, then
/// eval. Unlabeled annotations are written to disk (for analysis) but split
/// membership decides whether a loader exposes them. Refuses to write into a
/// non-empty directory unless `force` is set.
inline SplitManifest generate_dataset(const SyntheticSpec& spec, int n_labeled, int n_unlabeled,
                                      int n_eval, const std::string& dir, bool force = false) {
  spec.validate();
  if (n_labeled < 1 || n_eval < 1 || n_unlabeled < 0) {
    throw std::invalid_argument("generate_dataset: need n_labeled >= 1, n_eval >= 1, n_unlabeled >= 0");
  }
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) {
      throw std::runtime_error("generate_dataset: output directory " + dir +
                               " is not empty (pass force to overwrite)");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir + "/images");
  fs::create_directories(dir + "/annotations");

  const int total = n_labeled + n_unlabeled + n_eval;
  SplitManifest manifest;
  for (int i = 0; i < total; ++i) {
    const std::string id = format_image_id(static_cast<std::uint64_t>(i));
    const GeneratedImage gen = generate_image(spec, static_cast<std::uint64_t>(i));
    write_png(dir + "/images/" + id + ".png", gen.image);
    const std::string xml = voc_xml_string(gen.annotation, id + ".png", spec.image_size,
                                           spec.image_size, spec.class_names);
    std::ofstream xf(dir + "/annotations/" + id + ".xml", std::ios::trunc);
    if (!xf) throw std::runtime_error("generate_dataset: cannot write annotation for " + id);
    xf << xml;
    if (i < n_labeled) {
      manifest.labeled.push_back(id);
    } else if (i < n_labeled + n_unlabeled) {
      manifest.unlabeled.push_back(id);
    } else {
      manifest.eval_ids.push_back(id);
    }
  }

  write_split_manifest(dir, manifest);
  nlohmann::json info;
  info["image_size"] = spec.image_size;
  info["class_names"] = spec.class_names;
  info["seed"] = spec.seed;
  info["counts"] = {{"labeled", n_labeled}, {"unlabeled", n_unlabeled}, {"eval", n_eval}};
  std::ofstream inf(dir + "/dataset.json", std::ios::trunc);
  if (!inf) throw std::runtime_error("generate_dataset: cannot write dataset.json");
  inf << info.dump(2) << "\n";
  return manifest;
}

/// One loaded split: images always, annotations only when requested (the
/// trainer never requests them for the unlabeled split).
struct LoadedSplit {
  std::vector<std::string> ids;
  std::vector<ImageU8> images;
  std::vector<Annotation> annotations;  // empty unless with_annotations
};

inline LoadedSplit load_split(const std::string& dir, const std::vector<std::string>& ids,
                              const std::vector<std::string>& class_names,
                              bool with_annotations) {
  LoadedSplit split;
  split.ids = ids;
  split.images.reserve(ids.size());
  if (with_annotations) split.annotations.reserve(ids.size());
  for (const std::string& id : ids) {
    split.images.push_back(read_png(dir + "/images/" + id + ".png"));
    if (with_annotations) {
      split.annotations.push_back(
          read_voc_xml(dir + "/annotations/" + id + ".xml", class_names).annotation);
    }
  }
  return split;
}

}  // namespace mixdet
