#include "apnp/denoise.hpp"

#include <cmath>
#include <sstream>

#include "apnp/neural.hpp"

namespace apnp {

Denoiser Denoiser::identity(DenoiserDomain domain) {
  return Denoiser(DenoiserKind::identity, domain);
}

Denoiser Denoiser::soft_threshold(double weight, DenoiserDomain domain) {
  if (!(weight >= 0.0)) throw ParameterError("soft-threshold weight must be non-negative");
  Denoiser d(DenoiserKind::soft_threshold, domain);
  d.weight_ = weight;
  return d;
}

Denoiser Denoiser::neural(std::shared_ptr<const WeightArchive> archive) {
  if (!archive) throw ParameterError("neural denoiser needs an archive");
  validate_archive(*archive);
  Denoiser d(DenoiserKind::neural, archive->domain);
  d.archive_ = std::move(archive);
  return d;
}

Denoiser Denoiser::neural(const std::filesystem::path& archive_path) {
  return neural(std::make_shared<const WeightArchive>(load_weights(archive_path)));
}

std::string Denoiser::describe() const {
  std::ostringstream s;
  switch (kind_) {
    case DenoiserKind::identity: s << "identity"; break;
    case DenoiserKind::soft_threshold: s << "soft:" << weight_; break;
    case DenoiserKind::neural: s << "neural(" << archive_->layers.size() << " layers)"; break;
  }
  s << "/" << to_string(domain_);
  return s.str();
}

double shrink(double v, double threshold) {
  const double mag = std::abs(v) - threshold;
  if (mag <= 0.0) return 0.0;
  return v < 0.0 ? -mag : mag;
}

namespace {

void check_sigma(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ParameterError("denoiser sigma must be finite and non-negative");
  }
}

void check_domain(const Denoiser& d, DenoiserDomain wanted) {
  if (d.domain() != wanted) {
    throw DomainError(to_string(d.domain()) + "-domain denoiser applied to a " + to_string(wanted) +
                      "-domain input");
  }
}

void shrink_in_place(Image& img, double threshold) {
  for (double& v : img.values()) v = shrink(v, threshold);
}

void note_range(const WeightArchive& a, double sigma, WarningLog* log) {
  if (log == nullptr) return;
  if (sigma < a.metadata.sigma_min || sigma > a.metadata.sigma_max) {
    std::ostringstream s;
    s << "denoiser sigma " << sigma << " outside trained range [" << a.metadata.sigma_min << ", "
      << a.metadata.sigma_max << "]";
    log->push_back(s.str());
  }
}

// Stacks signal channels plus a constant noise-level channel, padding the
// bottom/right edges by replication up to the network's size multiple.
FeatureMap pack(const std::vector<const Image*>& channels, double sigma, int multiple) {
  const int h = channels.front()->height();
  const int w = channels.front()->width();
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  const int c_signal = static_cast<int>(channels.size());
  FeatureMap fm(c_signal + 1, ph, pw);
  for (int c = 0; c < c_signal; ++c) {
    const Image& src = *channels[c];
    for (int i = 0; i < ph; ++i) {
      const int si = std::min(i, h - 1);
      for (int j = 0; j < pw; ++j) fm.at(c, i, j) = static_cast<float>(src(si, std::min(j, w - 1)));
    }
  }
  std::fill(fm.data.begin() + static_cast<std::ptrdiff_t>(c_signal * fm.plane()), fm.data.end(),
            static_cast<float>(sigma));
  return fm;
}

std::vector<Image> run_network(const WeightArchive& a, const std::vector<const Image*>& channels,
                               double sigma) {
  const FeatureMap in = pack(channels, sigma, a.size_multiple());
  const FeatureMap out = neural_forward(a, in);
  const int h = channels.front()->height();
  const int w = channels.front()->width();
  std::vector<Image> result;
  for (int c = 0; c < out.channels; ++c) {
    Image img(h, w);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double v = out.at(c, i, j);
        if (a.prediction == Prediction::residual) v = (*channels[c])(i, j) - v;
        img(i, j) = v;
      }
    }
    result.push_back(std::move(img));
  }
  return result;
}

}  // namespace

GradientField denoise(const Denoiser& d, const GradientField& input, double sigma,
                      WarningLog* log) {
  check_sigma(sigma);
  check_domain(d, DenoiserDomain::gradient);
  switch (d.kind()) {
    case DenoiserKind::identity:
      return input;
    case DenoiserKind::soft_threshold: {
      GradientField out = input;
      const double threshold = d.weight() * sigma * sigma;
      shrink_in_place(out.dh, threshold);
      shrink_in_place(out.dv, threshold);
      return out;
    }
    case DenoiserKind::neural: {
      note_range(*d.archive(), sigma, log);
      std::vector<Image> out = run_network(*d.archive(), {&input.dh, &input.dv}, sigma);
      return GradientField(std::move(out[0]), std::move(out[1]));
    }
  }
  return input;
}

Image denoise(const Denoiser& d, const Image& input, double sigma, WarningLog* log) {
  check_sigma(sigma);
  check_domain(d, DenoiserDomain::image);
  switch (d.kind()) {
    case DenoiserKind::identity:
      return input;
    case DenoiserKind::soft_threshold: {
      Image out = input;
      shrink_in_place(out, d.weight() * sigma * sigma);
      return out;
    }
    case DenoiserKind::neural: {
      note_range(*d.archive(), sigma, log);
      return std::move(run_network(*d.archive(), {&input}, sigma).front());
    }
  }
  return input;
}

}  // namespace apnp
