#pragma once

// Patch embedders behind the semantic loss 1 − cos(e(rendered), e(target)).
//
// BuiltinEmbedder is a smooth, deterministic stand-in for an image encoder:
//   [ 8×8 average-pooled RGB (192) | soft orientation histogram of luminance
//     gradients, 8 bins × 4×4 cells (128) ]  →  L2 normalized.
// ExternalEmbedder talks the VEMB protocol with a child process so any real
// encoder can be plugged in.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace voxify {

/// Square P×P RGB patch, row-major.
struct Patch {
  int size = 0;
  std::vector<Rgb> pixels;

  Patch() = default;
  explicit Patch(int p) : size(p), pixels(static_cast<size_t>(p) * p) {}

  Rgb& at(int x, int y) { return pixels[static_cast<size_t>(y) * size + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<size_t>(y) * size + x]; }
};

struct SemanticResult {
  double loss = 0.0;
  std::vector<Rgb> grad;  // ∂loss/∂rendered pixels
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Loss and gradient w.r.t. the rendered patch, or nullopt when the term
  /// must be skipped this iteration.
  virtual std::optional<SemanticResult> loss_and_grad(const Patch& rendered, const Patch& target) = 0;
  virtual std::string name() const = 0;
};

class BuiltinEmbedder final : public Embedder {
 public:
  static constexpr int kPoolCells = 8;
  static constexpr int kHistCells = 4;
  static constexpr int kBins = 8;
  static constexpr int kDim = kPoolCells * kPoolCells * 3 + kHistCells * kHistCells * kBins;
  static constexpr double kMagnitudeEps = 1e-2;
  static constexpr double kNormEps = 1e-12;

  static void check_patch(const Patch& p) {
    if (p.size < kPoolCells || p.size % kPoolCells != 0 || p.pixels.size() != static_cast<size_t>(p.size) * p.size)
      throw Error(ErrorCode::kInvalidArgument, "patch size must be a positive multiple of 8");
  }

  /// Unnormalized feature vector.
  static std::vector<double> features(const Patch& p) {
    check_patch(p);
    std::vector<double> v(kDim, 0.0);
    const int P = p.size;
    const int pool = P / kPoolCells;
    const double pool_norm = 1.0 / (pool * pool);
    for (int y = 0; y < P; ++y)
      for (int x = 0; x < P; ++x) {
        const size_t base = 3 * (static_cast<size_t>(y / pool) * kPoolCells + x / pool);
        const Rgb& c = p.at(x, y);
        v[base] += c.x * pool_norm;
        v[base + 1] += c.y * pool_norm;
        v[base + 2] += c.z * pool_norm;
      }
    const std::vector<double> lum = luminance(p);
    const int hc = P / kHistCells;
    const double hist_norm = 1.0 / (hc * hc);
    for (int y = 0; y < P; ++y)
      for (int x = 0; x < P; ++x) {
        const auto [gx, gy] = gradient(lum, P, x, y);
        const double m = std::sqrt(gx * gx + gy * gy + kMagnitudeEps * kMagnitudeEps);
        const size_t base = kPoolCells * kPoolCells * 3 + kBins * (static_cast<size_t>(y / hc) * kHistCells + x / hc);
        for (int b = 0; b < kBins; ++b) {
          const double r = std::max(0.0, gx * kCos[b] + gy * kSin[b]);
          v[base + b] += r * r / m * hist_norm;
        }
      }
    return v;
  }

  static std::vector<double> embed(const Patch& p) {
    std::vector<double> v = features(p);
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2 + kNormEps);
    for (double& x : v) x /= n;
    return v;
  }

  /// Pullback of ∂L/∂(unit embedding) to ∂L/∂pixels.
  static std::vector<Rgb> vjp(const Patch& p, const std::vector<double>& grad_unit) {
    const std::vector<double> v = features(p);
    double n2 = 0.0, vg = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
      n2 += v[i] * v[i];
      vg += v[i] * grad_unit[i];
    }
    const double n = std::sqrt(n2 + kNormEps);
    std::vector<double> gv(v.size());
    for (size_t i = 0; i < v.size(); ++i) gv[i] = (grad_unit[i] - v[i] * vg / (n * n)) / n;

    const int P = p.size;
    std::vector<Rgb> out(static_cast<size_t>(P) * P);
    const int pool = P / kPoolCells;
    const double pool_norm = 1.0 / (pool * pool);
    for (int y = 0; y < P; ++y)
      for (int x = 0; x < P; ++x) {
        const size_t base = 3 * (static_cast<size_t>(y / pool) * kPoolCells + x / pool);
        out[static_cast<size_t>(y) * P + x] = Rgb(gv[base], gv[base + 1], gv[base + 2]) * pool_norm;
      }

    const std::vector<double> lum = luminance(p);
    std::vector<double> dlum(lum.size(), 0.0);
    const int hc = P / kHistCells;
    const double hist_norm = 1.0 / (hc * hc);
    for (int y = 0; y < P; ++y)
      for (int x = 0; x < P; ++x) {
        const auto [gx, gy] = gradient(lum, P, x, y);
        const double m = std::sqrt(gx * gx + gy * gy + kMagnitudeEps * kMagnitudeEps);
        const size_t base = kPoolCells * kPoolCells * 3 + kBins * (static_cast<size_t>(y / hc) * kHistCells + x / hc);
        double dgx = 0.0, dgy = 0.0;
        for (int b = 0; b < kBins; ++b) {
          const double r = std::max(0.0, gx * kCos[b] + gy * kSin[b]);
          if (r == 0.0) continue;
          const double g = gv[base + b] * hist_norm;
          // h = r²/m: ∂h/∂gx = 2r cos/m − r² gx/m³
          dgx += g * (2.0 * r * kCos[b] / m - r * r * gx / (m * m * m));
          dgy += g * (2.0 * r * kSin[b] / m - r * r * gy / (m * m * m));
        }
        const int xp = std::min(x + 1, P - 1), xm = std::max(x - 1, 0);
        const int yp = std::min(y + 1, P - 1), ym = std::max(y - 1, 0);
        dlum[static_cast<size_t>(y) * P + xp] += 0.5 * dgx;
        dlum[static_cast<size_t>(y) * P + xm] -= 0.5 * dgx;
        dlum[static_cast<size_t>(yp) * P + x] += 0.5 * dgy;
        dlum[static_cast<size_t>(ym) * P + x] -= 0.5 * dgy;
      }
    for (size_t i = 0; i < out.size(); ++i) out[i] += Rgb(kLumR, kLumG, kLumB) * dlum[i];
    return out;
  }

  std::optional<SemanticResult> loss_and_grad(const Patch& rendered, const Patch& target) override {
    const std::vector<double> e_r = embed(rendered);
    const std::vector<double> e_t = embed(target);
    double cos = 0.0;
    for (size_t i = 0; i < e_r.size(); ++i) cos += e_r[i] * e_t[i];
    std::vector<double> g(e_t.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = -e_t[i];
    return SemanticResult{1.0 - cos, vjp(rendered, g)};
  }

  std::string name() const override { return "builtin"; }

 private:
  static constexpr double kLumR = 0.299, kLumG = 0.587, kLumB = 0.114;
  static constexpr double kCos[kBins] = {1.0, 0.70710678118654752, 0.0, -0.70710678118654752,
                                         -1.0, -0.70710678118654752, 0.0, 0.70710678118654752};
  static constexpr double kSin[kBins] = {0.0, 0.70710678118654752, 1.0, 0.70710678118654752,
                                         0.0, -0.70710678118654752, -1.0, -0.70710678118654752};

  static std::vector<double> luminance(const Patch& p) {
    std::vector<double> lum(p.pixels.size());
    for (size_t i = 0; i < lum.size(); ++i) lum[i] = kLumR * p.pixels[i].x + kLumG * p.pixels[i].y + kLumB * p.pixels[i].z;
    return lum;
  }

  static std::pair<double, double> gradient(const std::vector<double>& lum, int P, int x, int y) {
    const int xp = std::min(x + 1, P - 1), xm = std::max(x - 1, 0);
    const int yp = std::min(y + 1, P - 1), ym = std::max(y - 1, 0);
    const size_t row = static_cast<size_t>(y) * P;
    return {0.5 * (lum[row + xp] - lum[row + xm]), 0.5 * (lum[static_cast<size_t>(yp) * P + x] - lum[static_cast<size_t>(ym) * P + x])};
  }
};

/// VEMB wire format. Request: "VEMB", u32 P, u32 pair count, u32 reserved (0),
/// then per pair the rendered and the target patch as f32 RGB row-major.
/// Reply: f32 loss, then f32 ∂loss/∂rendered for every pair. Little endian.
namespace vemb {

inline constexpr char kMagic[4] = {'V', 'E', 'M', 'B'};
inline constexpr size_t kHeaderBytes = 16;

inline void append_u32(std::vector<unsigned char>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void append_f32(std::vector<unsigned char>& buf, float f) { append_u32(buf, std::bit_cast<uint32_t>(f)); }

inline uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline float read_f32(const unsigned char* p) { return std::bit_cast<float>(read_u32(p)); }

inline std::vector<unsigned char> encode_request(const Patch& rendered, const Patch& target) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  append_u32(buf, static_cast<uint32_t>(rendered.size));
  append_u32(buf, 1);
  append_u32(buf, 0);
  for (const Patch* p : {&rendered, &target})
    for (const Rgb& c : p->pixels) {
      append_f32(buf, static_cast<float>(c.x));
      append_f32(buf, static_cast<float>(c.y));
      append_f32(buf, static_cast<float>(c.z));
    }
  return buf;
}

inline size_t reply_bytes(int patch_size, uint32_t pairs) {
  return 4 + static_cast<size_t>(pairs) * patch_size * patch_size * 3 * 4;
}

}  // namespace vemb

/// Runs `sh -c command` once and keeps it alive across requests; a crashed,
/// hung (timeout) or misbehaving child yields nullopt plus a warning, and is
/// restarted on the next request. One request is in flight at a time.
class ExternalEmbedder final : public Embedder {
 public:
  explicit ExternalEmbedder(std::string command, std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : command_(std::move(command)), timeout_(timeout) {}
  ~ExternalEmbedder() override { stop(); }

  ExternalEmbedder(const ExternalEmbedder&) = delete;
  ExternalEmbedder& operator=(const ExternalEmbedder&) = delete;

  std::optional<SemanticResult> loss_and_grad(const Patch& rendered, const Patch& target) override {
    std::lock_guard lock(mutex_);
    if (rendered.size != target.size) throw Error(ErrorCode::kInvalidArgument, "patch sizes differ");
    if (pid_ < 0 && !start()) return fail("could not start '" + command_ + "'");
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    const std::vector<unsigned char> req = vemb::encode_request(rendered, target);
    if (!send_all(req, deadline)) return fail("write to embedder failed");
    std::vector<unsigned char> reply(vemb::reply_bytes(rendered.size, 1));
    if (!recv_all(reply, deadline)) return fail("embedder reply missing or truncated");
    SemanticResult r;
    r.loss = vemb::read_f32(reply.data());
    r.grad.resize(rendered.pixels.size());
    bool finite = std::isfinite(r.loss);
    for (size_t i = 0; i < r.grad.size(); ++i) {
      const unsigned char* p = reply.data() + 4 + 12 * i;
      r.grad[i] = {vemb::read_f32(p), vemb::read_f32(p + 4), vemb::read_f32(p + 8)};
      finite = finite && std::isfinite(r.grad[i].x) && std::isfinite(r.grad[i].y) && std::isfinite(r.grad[i].z);
    }
    if (!finite) {
      warn("external embedder returned non-finite values; semantic term skipped");
      return std::nullopt;
    }
    return r;
  }

  std::string name() const override { return "external:" + command_; }

 private:
  std::optional<SemanticResult> fail(const std::string& why) {
    warn("external embedder: " + why + "; semantic term skipped");
    stop();
    return std::nullopt;
  }

  bool start() {
    int sv[2];
    if (socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) return false;
    const pid_t pid = fork();
    if (pid < 0) {
      close(sv[0]);
      close(sv[1]);
      return false;
    }
    if (pid == 0) {
      // Own process group: the shell may fork the embedder rather than exec it.
      setpgid(0, 0);
      close(sv[0]);
      dup2(sv[1], STDIN_FILENO);
      dup2(sv[1], STDOUT_FILENO);
      close(sv[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    setpgid(pid, pid);  // either side may win the race
    close(sv[1]);
    fd_ = sv[0];
    pid_ = pid;
    return true;
  }

  void stop() {
    if (fd_ >= 0) close(fd_);
    fd_ = -1;
    if (pid_ > 0) {
      kill(-pid_, SIGKILL);
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
  }

  int remaining_ms(std::chrono::steady_clock::time_point deadline) const {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    return static_cast<int>(std::max<long long>(0, left.count()));
  }

  bool send_all(const std::vector<unsigned char>& buf, std::chrono::steady_clock::time_point deadline) {
    size_t off = 0;
    while (off < buf.size()) {
      pollfd pfd{fd_, POLLOUT, 0};
      if (poll(&pfd, 1, remaining_ms(deadline)) <= 0) return false;
      const ssize_t n = send(fd_, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return false;
      off += static_cast<size_t>(n);
    }
    return true;
  }

  bool recv_all(std::vector<unsigned char>& buf, std::chrono::steady_clock::time_point deadline) {
    size_t off = 0;
    while (off < buf.size()) {
      pollfd pfd{fd_, POLLIN, 0};
      if (poll(&pfd, 1, remaining_ms(deadline)) <= 0) return false;
      const ssize_t n = recv(fd_, buf.data() + off, buf.size() - off, 0);
      if (n <= 0) return false;
      off += static_cast<size_t>(n);
    }
    return true;
  }

  std::string command_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  int fd_ = -1;
};

}  // namespace voxify
