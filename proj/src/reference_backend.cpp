#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "gazeseg/error.hpp"
#include "gazeseg/seg_backend.hpp"

namespace gazeseg {

void SegmentationRequest::validate() const {
  if (box && !box->ordered()) fail(ErrorCode::kInvalidParam, "box corners are not ordered");
  if (prompt.live_count() == 0 && !box) {
    fail(ErrorCode::kEmptyPrompt, "request has no live prompt point and no box");
  }
}

namespace {

double neighborhood_mean(const ImageSlice& image, std::span<const Pixel> centers) {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(image.height()) * image.width(), 0);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : centers) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = c.row + dr;
        const int col = c.col + dc;
        if (!image.contains(r, col)) continue;
        const auto i = image.index(r, col);
        if (seen[i]) continue;
        seen[i] = 1;
        sum += image.at(r, col);
        ++n;
      }
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

ReferenceResult reference_segment(const ImageSlice& image, const PointPrompt& prompt,
                                  const std::optional<Box>& box, const Mask* prior, double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidParam, "tau must be > 0");
  if (prior != nullptr && (prior->height() != image.height() || prior->width() != image.width())) {
    fail(ErrorCode::kShapeMismatch, "prior mask shape differs from image");
  }
  const int h = image.height();
  const int w = image.width();
  auto allowed = [&](int r, int c) { return image.contains(r, c) && (!box || box->contains(r, c)); };

  std::vector<Pixel> fg_pixels;
  std::vector<Pixel> bg_pixels;
  for (const auto& p : prompt.points()) {
    if (p.label == kLabelPadding) continue;
    const Pixel px{round_coord(p.y), round_coord(p.x)};
    if (!image.contains(px.row, px.col)) continue;
    (p.label == kLabelForeground ? fg_pixels : bg_pixels).push_back(px);
  }

  std::vector<Pixel> seeds;
  for (const auto& px : fg_pixels) {
    if (allowed(px.row, px.col)) seeds.push_back(px);
  }
  if (seeds.empty() && box) seeds.push_back({(box->r0 + box->r1) / 2, (box->c0 + box->c1) / 2});
  if (seeds.empty()) fail(ErrorCode::kEmptyPrompt, "no foreground seed inside the image");

  auto row_major = [](const Pixel& a, const Pixel& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  };
  std::sort(seeds.begin(), seeds.end(), row_major);
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  const double mu = neighborhood_mean(image, seeds);
  auto admits = [&](int r, int c) { return std::abs(image.at(r, c) - mu) <= tau; };

  if (prior != nullptr) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (prior->at(r, c) && allowed(r, c) && admits(r, c)) seeds.push_back({r, c});
      }
    }
    std::sort(seeds.begin(), seeds.end(), row_major);
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  }

  Mask grown(h, w);
  std::deque<Pixel> frontier;
  for (const auto& s : seeds) {
    if (!allowed(s.row, s.col) || !admits(s.row, s.col) || grown.at(s.row, s.col)) continue;
    grown.set(s.row, s.col);
    frontier.push_back(s);
  }
  constexpr int kDr[4] = {-1, 0, 0, 1};
  constexpr int kDc[4] = {0, -1, 1, 0};
  while (!frontier.empty()) {
    const Pixel p = frontier.front();
    frontier.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int r = p.row + kDr[k];
      const int c = p.col + kDc[k];
      if (!allowed(r, c) || grown.at(r, c) || !admits(r, c)) continue;
      grown.set(r, c);
      frontier.push_back({r, c});
    }
  }

  if (!bg_pixels.empty()) {
    std::vector<double> bg_mu;
    bg_mu.reserve(bg_pixels.size());
    for (const auto& b : bg_pixels) bg_mu.push_back(neighborhood_mean(image, std::span(&b, 1)));
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!grown.at(r, c)) continue;
        auto dist2 = [&](const Pixel& q) {
          const double dr = q.row - r;
          const double dc = q.col - c;
          return dr * dr + dc * dc;
        };
        std::size_t nearest_bg = 0;
        double best_bg = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < bg_pixels.size(); ++i) {
          const double d = dist2(bg_pixels[i]);
          if (d < best_bg) {
            best_bg = d;
            nearest_bg = i;
          }
        }
        double best_fg = std::numeric_limits<double>::infinity();
        for (const auto& f : fg_pixels) best_fg = std::min(best_fg, dist2(f));
        if (best_bg < best_fg && std::abs(image.at(r, c) - bg_mu[nearest_bg]) <= tau) {
          grown.set(r, c, false);
        }
      }
    }
  }

  ReferenceResult result{std::move(grown), std::vector<double>(static_cast<std::size_t>(h) * w, 0.0)};
  for (std::size_t i = 0; i < result.prob.size(); ++i) {
    if (!result.mask.at(i)) continue;
    result.prob[i] = 1.0 - std::abs(image.intensities()[i] - mu) / (2.0 * tau);
  }
  return result;
}

ReferenceBackend::ReferenceBackend(double tau) : tau_(tau) {
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidParam, "tau must be > 0");
}

SegmentationResponse ReferenceBackend::segment(const SegmentationRequest& req) {
  req.validate();
  if (!req.image) fail(ErrorCode::kInvalidParam, "reference backend needs an inline image");
  const auto start = std::chrono::steady_clock::now();
  const Mask* prior = req.prior_mask ? &*req.prior_mask : nullptr;
  auto result = reference_segment(*req.image, req.prompt, req.box, prior, tau_);
  const auto end = std::chrono::steady_clock::now();
  SegmentationResponse resp;
  resp.request_id = req.request_id;
  resp.mask = std::move(result.mask);
  resp.prob = std::move(result.prob);
  resp.latency_ms = std::chrono::duration<double, std::milli>(end - start).count();
  return resp;
}

std::string ReferenceBackend::identity() const {
  std::ostringstream os;
  os << "reference(tau=" << tau_ << ")";
  return os.str();
}

Box bbox_from_mask(const Mask& mask, int margin) {
  if (margin < 0) fail(ErrorCode::kInvalidParam, "margin must be >= 0");
  int r0 = mask.height(), c0 = mask.width(), r1 = -1, c1 = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      r0 = std::min(r0, r);
      c0 = std::min(c0, c);
      r1 = std::max(r1, r);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) fail(ErrorCode::kEmptyMask, "bbox_from_mask: mask is empty");
  return {std::max(0, r0 - margin), std::max(0, c0 - margin), std::min(mask.height() - 1, r1 + margin),
          std::min(mask.width() - 1, c1 + margin)};
}

}  // namespace gazeseg
