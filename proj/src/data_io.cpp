#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "gazeseg/codec.hpp"
#include "gazeseg/data_io.hpp"
#include "gazeseg/error.hpp"
#include "gazeseg/rle.hpp"
#include "gazeseg/rng.hpp"

namespace gazeseg {

std::vector<ImageSlice> slice_and_window(const Volume& vol, double window_center,
                                         double window_width, const std::string& case_id) {
  if (!(window_width > 0.0)) fail(ErrorCode::kInvalidWindow, "window width must be > 0");
  const int h = vol.dims[0];
  const int w = vol.dims[1];
  const double lo = window_center - window_width / 2.0;
  std::vector<ImageSlice> out;
  out.reserve(static_cast<std::size_t>(vol.dims[2]));
  for (int z = 0; z < vol.dims[2]; ++z) {
    std::vector<double> pix(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        pix[static_cast<std::size_t>(r) * w + c] =
            std::clamp((vol.value(vol.index(r, c, z)) - lo) / window_width, 0.0, 1.0);
      }
    }
    out.emplace_back(h, w, std::move(pix), z, case_id);
  }
  return out;
}

LabelSlice label_slice(const Volume& labels, int slice_index) {
  if (slice_index < 0 || slice_index >= labels.dims[2]) fail(ErrorCode::kOutOfBounds, "slice index out of range");
  LabelSlice s{labels.dims[0], labels.dims[1], {}};
  s.labels.resize(static_cast<std::size_t>(s.height) * s.width);
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      s.labels[static_cast<std::size_t>(r) * s.width + c] =
          static_cast<std::int32_t>(std::lround(labels.value(labels.index(r, c, slice_index))));
    }
  }
  return s;
}

Mask organ_mask(const LabelSlice& labels, int organ_id) {
  const auto organ = structure_from_label_id(organ_id);
  if (!organ) fail(ErrorCode::kInvalidParam, "organ id must be in 1..16");
  Mask m(labels.height, labels.width, *organ);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) m.set(i, labels.labels[i] == organ_id);
  return m;
}

std::vector<Mask> decompose_structures(const LabelSlice& labels, int organ_id, std::size_t min_area) {
  const auto organ = structure_from_label_id(organ_id);
  if (!organ) fail(ErrorCode::kInvalidParam, "organ id must be in 1..16");
  const int h = labels.height;
  const int w = labels.width;
  std::vector<std::uint8_t> visited(labels.labels.size(), 0);
  std::vector<Mask> out;
  std::vector<Pixel> stack;
  for (int r0 = 0; r0 < h; ++r0) {
    for (int c0 = 0; c0 < w; ++c0) {
      const auto i0 = static_cast<std::size_t>(r0) * w + c0;
      if (visited[i0] || labels.labels[i0] != organ_id) continue;
      Mask comp(h, w, *organ);
      std::size_t area = 0;
      visited[i0] = 1;
      stack.assign(1, {r0, c0});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.set(p.row, p.col);
        ++area;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int r = p.row + dr;
            const int c = p.col + dc;
            if (r < 0 || c < 0 || r >= h || c >= w) continue;
            const auto i = static_cast<std::size_t>(r) * w + c;
            if (visited[i] || labels.labels[i] != organ_id) continue;
            visited[i] = 1;
            stack.push_back({r, c});
          }
        }
      }
      if (area >= min_area) out.push_back(std::move(comp));
    }
  }
  return out;
}

// ---- phantoms --------------------------------------------------------------

Mask rasterize_blob(const PhantomBlob& b, int height, int width) {
  Mask m(height, width, b.structure);
  const double cs = std::cos(b.rotation);
  const double sn = std::sin(b.rotation);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double dc = c - b.center_col;
      const double dr = r - b.center_row;
      const double u = dc * cs + dr * sn;
      const double v = -dc * sn + dr * cs;
      const double e = (u * u) / (b.radius_col * b.radius_col) + (v * v) / (b.radius_row * b.radius_row);
      if (e <= 1.0) m.set(r, c);
    }
  }
  return m;
}

namespace {

// Cut lines perpendicular to the major axis, each a 4-connected digital line
// of unit thickness, splitting the blob into `lobes` parts.
bool on_lobe_cut(const PhantomBlob& b, int r, int c) {
  if (b.lobes <= 1) return false;
  const double cs = std::cos(b.rotation);
  const double sn = std::sin(b.rotation);
  const bool major_u = b.radius_col >= b.radius_row;
  // Unit normal of the cut lines in (col, row) coordinates.
  const double nx = major_u ? cs : -sn;
  const double ny = major_u ? sn : cs;
  const double a = major_u ? b.radius_col : b.radius_row;
  const double along = (c - b.center_col) * nx + (r - b.center_row) * ny;
  const double half = 0.5 * (std::abs(nx) + std::abs(ny));
  for (int k = 1; k < b.lobes; ++k) {
    const double pos = -a + 2.0 * a * k / b.lobes;
    const double d = along - pos;
    if (d >= -half && d < half) return true;
  }
  return false;
}

void validate_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::kInvalidParam, std::string(what) + " outside [0,1]");
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec) {
  if (spec.height < 1 || spec.width < 1) fail(ErrorCode::kInvalidParam, "phantom dims must be >= 1");
  validate_unit(spec.background_intensity, "background intensity");
  if (spec.noise_std < 0.0) fail(ErrorCode::kInvalidParam, "noise_std must be >= 0");
  const std::size_t n = static_cast<std::size_t>(spec.height) * spec.width;
  std::vector<double> pix(n, spec.background_intensity);
  std::vector<int> owner(n, -1);
  Phantom ph;
  for (std::size_t bi = 0; bi < spec.blobs.size(); ++bi) {
    const auto& b = spec.blobs[bi];
    validate_unit(b.intensity, "blob intensity");
    if (!(b.radius_row > 0.0 && b.radius_col > 0.0) || b.lobes < 1) {
      fail(ErrorCode::kInvalidParam, "blob radii must be > 0 and lobes >= 1");
    }
    Mask cover = rasterize_blob(b, spec.height, spec.width);
    Mask gt(spec.height, spec.width, b.structure);
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        if (!cover.at(r, c)) continue;
        const auto i = cover.index(r, c);
        if (owner[i] >= 0) {
          fail(ErrorCode::kOverlapError,
               "blobs " + std::to_string(owner[i]) + " and " + std::to_string(bi) + " overlap");
        }
        owner[i] = static_cast<int>(bi);
        if (!on_lobe_cut(b, r, c)) {
          gt.set(i);
          pix[i] = b.intensity;
        }
      }
    }
    ph.masks.push_back(std::move(gt));
  }
  if (spec.noise_std > 0.0) {
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& v : pix) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  ph.image = ImageSlice(spec.height, spec.width, std::move(pix));
  return ph;
}

// ---- corpora ---------------------------------------------------------------

void Corpus::add(CaseSlice slice) { slices_.push_back(std::move(slice)); }

const CaseSlice* Corpus::find(const std::string& case_id, int slice_index) const {
  for (const auto& s : slices_) {
    if (s.case_id == case_id && s.slice_index == slice_index) return &s;
  }
  return nullptr;
}

std::vector<StructureInstance> Corpus::instances() const {
  std::vector<StructureInstance> out;
  for (const auto& s : slices_) {
    std::map<Structure, int> seen;
    for (const auto& m : s.structures) {
      const int k = seen[m.structure()]++;
      std::string key(structure_name(m.structure()));
      if (k > 0) key += "#" + std::to_string(k);
      out.push_back({s.case_id, s.slice_index, key, s.image, m});
    }
  }
  std::sort(out.begin(), out.end(), [](const StructureInstance& a, const StructureInstance& b) {
    if (a.case_id != b.case_id) return a.case_id < b.case_id;
    if (a.slice_index != b.slice_index) return a.slice_index < b.slice_index;
    return a.key < b.key;
  });
  return out;
}

namespace {

std::string case_name(std::string_view prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*s%03d", static_cast<int>(prefix.size()), prefix.data(), i);
  return buf;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

bool fits(const PhantomBlob& b, const std::vector<PhantomBlob>& placed, int size, double gap) {
  const double reach = std::max(b.radius_row, b.radius_col);
  if (b.center_row - reach < 2 || b.center_col - reach < 2 || b.center_row + reach > size - 3 ||
      b.center_col + reach > size - 3) {
    return false;
  }
  for (const auto& o : placed) {
    const double d = std::hypot(b.center_row - o.center_row, b.center_col - o.center_col);
    if (d < reach + std::max(o.radius_row, o.radius_col) + gap) return false;
  }
  return true;
}

CaseSlice mixed_case(int index, const PhantomCorpusSpec& spec, Rng& rng) {
  PhantomSpec ps;
  ps.height = ps.width = spec.size;
  ps.background_intensity = uniform(rng, 0.25, 0.35);
  ps.noise_std = spec.noise_std;
  ps.seed = rng();
  const int blobs = 1 + static_cast<int>(uniform_index(rng, 3));
  std::vector<int> organs(kOrganCount);
  for (int i = 0; i < kOrganCount; ++i) organs[i] = i + 1;
  std::shuffle(organs.begin(), organs.end(), rng);
  const double scale = spec.size / 96.0;
  for (int b = 0; b < blobs; ++b) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      PhantomBlob blob;
      blob.radius_row = uniform(rng, 7.0, 16.0) * scale;
      blob.radius_col = uniform(rng, 7.0, 16.0) * scale;
      blob.rotation = uniform(rng, 0.0, std::numbers::pi);
      blob.center_row = uniform(rng, 0.0, spec.size);
      blob.center_col = uniform(rng, 0.0, spec.size);
      const double contrast = uniform(rng, 0.12, 0.6);
      const bool brighter = ps.background_intensity - contrast < 0.0 || uniform01(rng) < 0.7;
      blob.intensity = ps.background_intensity + (brighter ? contrast : -contrast);
      blob.structure = static_cast<Structure>(organs[b]);
      if (fits(blob, ps.blobs, spec.size, 3.0)) {
        ps.blobs.push_back(blob);
        break;
      }
    }
  }
  if (ps.blobs.empty()) fail(ErrorCode::kCorpusError, "could not place any phantom blob");
  auto ph = generate_phantom(ps);
  const std::string id = case_name("mixed", index);
  auto image = std::make_shared<ImageSlice>(ph.image.height(), ph.image.width(),
                                            std::vector<double>(ph.image.intensities().begin(),
                                                                ph.image.intensities().end()),
                                            0, id);
  return {id, 0, std::move(image), std::move(ph.masks)};
}

CaseSlice two_lobe_case(int index, const PhantomCorpusSpec& spec, Rng& rng) {
  PhantomSpec ps;
  ps.height = ps.width = spec.size;
  ps.background_intensity = uniform(rng, 0.2, 0.3);
  ps.noise_std = spec.noise_std;
  ps.seed = rng();
  const double scale = spec.size / 96.0;
  PhantomBlob blob;
  blob.radius_col = uniform(rng, 22.0, 32.0) * scale;
  blob.radius_row = uniform(rng, 9.0, 13.0) * scale;
  blob.rotation = uniform(rng, 0.0, std::numbers::pi);
  blob.center_row = spec.size / 2.0 + uniform(rng, -4.0, 4.0) * scale;
  blob.center_col = spec.size / 2.0 + uniform(rng, -4.0, 4.0) * scale;
  blob.intensity = ps.background_intensity + uniform(rng, 0.3, 0.45);
  blob.lobes = 2;
  blob.structure = Structure::kLiver;
  ps.blobs.push_back(blob);
  auto ph = generate_phantom(ps);
  const std::string id = case_name("twolobe", index);
  auto image = std::make_shared<ImageSlice>(ph.image.height(), ph.image.width(),
                                            std::vector<double>(ph.image.intensities().begin(),
                                                                ph.image.intensities().end()),
                                            0, id);
  return {id, 0, std::move(image), std::move(ph.masks)};
}

}  // namespace

Corpus make_phantom_corpus(const PhantomCorpusSpec& spec) {
  if (spec.count < 1 || spec.size < 32) fail(ErrorCode::kInvalidParam, "phantom corpus needs count >= 1 and size >= 32");
  Corpus corpus;
  Rng rng(spec.seed);
  for (int i = 0; i < spec.count; ++i) {
    Rng case_rng(splitmix64(rng()));
    corpus.add(spec.kind == PhantomCorpusKind::kMixed ? mixed_case(i, spec, case_rng)
                                                      : two_lobe_case(i, spec, case_rng));
  }
  return corpus;
}

Corpus load_manifest(const std::filesystem::path& manifest, const ManifestOptions& options) {
  nlohmann::json j;
  try {
    const auto bytes = read_file(manifest);
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorpusError, std::string("manifest is not valid JSON: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorCode::kCorpusError, e.what());
  }
  if (options.slice_stride < 1) fail(ErrorCode::kInvalidParam, "slice_stride must be >= 1");
  const auto base = manifest.parent_path();
  Corpus corpus;
  try {
    for (const auto& c : j.at("cases")) {
      const std::string id = c.at("id").get<std::string>();
      auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base / path;
      };
      Volume image, labels;
      try {
        image = read_nifti_file(resolve(c.at("image").get<std::string>()));
        labels = read_nifti_file(resolve(c.at("labels").get<std::string>()));
      } catch (const Error& e) {
        fail(ErrorCode::kCorpusError, "case " + id + ": " + e.what());
      }
      if (image.dims != labels.dims) fail(ErrorCode::kCorpusError, "image and labels dims differ for case " + id);
      const auto slices = slice_and_window(image, options.window_center, options.window_width, id);
      for (int z = 0; z < image.dims[2]; z += options.slice_stride) {
        const auto ls = label_slice(labels, z);
        std::vector<Mask> structures;
        for (int organ = 1; organ <= kOrganCount; ++organ) {
          for (auto& m : decompose_structures(ls, organ, options.min_area)) structures.push_back(std::move(m));
        }
        if (structures.empty()) continue;
        corpus.add({id, z, std::make_shared<ImageSlice>(slices[static_cast<std::size_t>(z)]), std::move(structures)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorpusError, std::string("bad manifest entry: ") + e.what());
  }
  return corpus;
}

Corpus load_corpus(const nlohmann::json& config, const std::filesystem::path& base_dir) {
  try {
    if (config.contains("phantom")) {
      const auto& p = config.at("phantom");
      PhantomCorpusSpec spec;
      const std::string kind = p.value("kind", std::string("mixed"));
      if (kind == "mixed") {
        spec.kind = PhantomCorpusKind::kMixed;
      } else if (kind == "two_lobe") {
        spec.kind = PhantomCorpusKind::kTwoLobe;
      } else {
        fail(ErrorCode::kCorpusError, "unknown phantom kind '" + kind + "'");
      }
      spec.count = p.value("count", spec.count);
      spec.size = p.value("size", spec.size);
      spec.seed = p.value("seed", spec.seed);
      spec.noise_std = p.value("noise_std", spec.noise_std);
      return make_phantom_corpus(spec);
    }
    if (config.contains("manifest")) {
      ManifestOptions opts;
      opts.window_center = config.value("window_center", opts.window_center);
      opts.window_width = config.value("window_width", opts.window_width);
      opts.slice_stride = config.value("slice_stride", opts.slice_stride);
      opts.min_area = config.value("min_area", opts.min_area);
      std::filesystem::path path(config.at("manifest").get<std::string>());
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      return load_manifest(path, opts);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorpusError, std::string("bad corpus config: ") + e.what());
  }
  fail(ErrorCode::kCorpusError, "corpus config needs \"phantom\" or \"manifest\"");
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir) {
  for (const auto& inst : corpus.instances()) {
    const std::string stem = inst.case_id + "_" + std::to_string(inst.slice_index);
    auto j = rle_to_json(inst.gt);
    j["structure"] = inst.key;
    write_text(out_dir / (stem + "." + inst.key + ".json"), j.dump() + "\n");
  }
  for (const auto& s : corpus.slices()) {
    const std::string stem = s.case_id + "_" + std::to_string(s.slice_index);
    write_file(out_dir / (stem + ".png"),
               png_encode_gray8(to_gray8(s.image->height(), s.image->width(), s.image->intensities())));
  }
}

}  // namespace gazeseg
