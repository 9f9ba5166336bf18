#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "redssl/data/dataset.hpp"
#include "redssl/error.hpp"

namespace redssl::data {

Matrix augment_gaussian(const Matrix& points, double sigma_eps, CounterRng& rng) {
  if (sigma_eps < 0.0) throw ConfigError("augment_gaussian: sigma_eps must be non-negative");
  Matrix out = points;
  if (sigma_eps == 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma_eps * rng.normal();
  return out;
}

Matrix augment_gaussian(const Matrix& points, double sigma_eps, std::uint64_t seed) {
  CounterRng rng(seed, "gaussian-noise");
  return augment_gaussian(points, sigma_eps, rng);
}

namespace {

// Shortest text that parses back to the same double.
std::string short_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string Augmentation::name() const {
  switch (kind) {
    case AugmentationKind::Identity: return "identity";
    case AugmentationKind::Rotate2d: return "rotate2d:" + short_double(param);
    case AugmentationKind::UniformScale: return "scale:" + short_double(param);
    case AugmentationKind::CoordinateDropout: return "dropout:" + short_double(param);
    case AugmentationKind::GaussianNoise: return "noise:" + short_double(param);
  }
  return "unknown";
}

void Augmentation::validate() const {
  switch (kind) {
    case AugmentationKind::Identity:
    case AugmentationKind::Rotate2d:
      break;
    case AugmentationKind::UniformScale:
      if (!(std::abs(param) > 0.0)) throw ConfigError("scale augmentation needs a nonzero factor");
      break;
    case AugmentationKind::CoordinateDropout:
      if (!(param >= 0.0 && param <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
      break;
    case AugmentationKind::GaussianNoise:
      if (!(param >= 0.0)) throw ConfigError("noise sigma must be non-negative");
      break;
  }
}

Augmentation Augmentation::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  double param = 0.0;
  if (colon != std::string_view::npos) {
    const std::string_view num = text.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), param);
    if (ec != std::errc{} || ptr != num.data() + num.size()) {
      throw ConfigError("augmentation '" + std::string(text) + "': bad parameter");
    }
  }
  Augmentation aug;
  if (kind == "identity") {
    aug.kind = AugmentationKind::Identity;
  } else if (kind == "rotate2d") {
    aug.kind = AugmentationKind::Rotate2d;
  } else if (kind == "scale") {
    aug.kind = AugmentationKind::UniformScale;
  } else if (kind == "dropout") {
    aug.kind = AugmentationKind::CoordinateDropout;
  } else if (kind == "noise") {
    aug.kind = AugmentationKind::GaussianNoise;
  } else {
    throw ConfigError("unknown augmentation kind '" + std::string(kind) + "'");
  }
  if (aug.kind != AugmentationKind::Identity && colon == std::string_view::npos) {
    throw ConfigError("augmentation '" + std::string(text) + "' needs a parameter");
  }
  aug.param = param;
  aug.validate();
  return aug;
}

Matrix augment_unseen(const Matrix& points, const Augmentation& aug, std::uint64_t seed) {
  aug.validate();
  Matrix out = points;
  switch (aug.kind) {
    case AugmentationKind::Identity:
      break;
    case AugmentationKind::Rotate2d: {
      if (points.cols() < 2) throw ShapeError("rotate2d needs at least two coordinates");
      const double theta = aug.param * std::numbers::pi / 180.0;
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double x = points(i, 0);
        const double y = points(i, 1);
        out(i, 0) = c * x - s * y;
        out(i, 1) = s * x + c * y;
      }
      break;
    }
    case AugmentationKind::UniformScale:
      out *= aug.param;
      break;
    case AugmentationKind::CoordinateDropout: {
      CounterRng rng(seed, "coordinate-dropout");
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (rng.uniform() < aug.param) out.data()[i] = 0.0;
      }
      break;
    }
    case AugmentationKind::GaussianNoise: {
      CounterRng rng(seed, "unseen-noise");
      out = augment_gaussian(points, aug.param, rng);
      break;
    }
  }
  return out;
}

}  // namespace redssl::data
