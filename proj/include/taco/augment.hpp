#pragma once

#include <cstdint>

#include "taco/error.hpp"
#include "taco/random.hpp"
#include "taco/tensor.hpp"

namespace taco {

// Integer translation with replicate padding: out[c,i,j] = in[c, clamp(i-dy),
// clamp(j-dx)]. Positive dx moves content right, positive dy moves it down.
// Equivalent to replicate-pad by p then crop at offset (p-dy, p-dx).
inline ByteTensor shift_image(const ByteTensor& obs, int dx, int dy) {
  TACO_CHECK(obs.ndim() == 3, UsageError, "shift_image wants [C,H,W]");
  const int64_t c = obs.dim(0), h = obs.dim(1), w = obs.dim(2);
  ByteTensor out(obs.shape());
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t i = 0; i < h; ++i) {
      int64_t si = i - dy;
      si = si < 0 ? 0 : (si >= h ? h - 1 : si);
      const uint8_t* src = obs.data() + (ci * h + si) * w;
      uint8_t* dst = out.data() + (ci * h + i) * w;
      for (int64_t j = 0; j < w; ++j) {
        int64_t sj = j - dx;
        sj = sj < 0 ? 0 : (sj >= w ? w - 1 : sj);
        dst[j] = src[sj];
      }
    }
  return out;
}

// DrQ-v2 random shift: (dx, dy) uniform over [-pad, pad]^2. Draw order is dx
// then dy so seeded tests can predict shifts.
inline ByteTensor random_shift(const ByteTensor& obs, int pad, Rng& rng) {
  TACO_CHECK(pad >= 0, UsageError, "random_shift: pad must be >= 0");
  if (pad == 0) return obs;
  const int dx = static_cast<int>(rng.uniform_int(-pad, pad));
  const int dy = static_cast<int>(rng.uniform_int(-pad, pad));
  return shift_image(obs, dx, dy);
}

// Per-sample independent shifts over a [N,C,H,W] batch.
inline ByteTensor random_shift_batch(const ByteTensor& batch, int pad, Rng& rng) {
  TACO_CHECK(batch.ndim() == 4, UsageError, "random_shift_batch wants [N,C,H,W]");
  TACO_CHECK(pad >= 0, UsageError, "random_shift_batch: pad must be >= 0");
  if (pad == 0) return batch;
  const int64_t n = batch.dim(0);
  ByteTensor out(batch.shape());
  const int64_t per = batch.numel() / n;
  ByteTensor one({batch.dim(1), batch.dim(2), batch.dim(3)});
  for (int64_t s = 0; s < n; ++s) {
    std::copy(batch.data() + s * per, batch.data() + (s + 1) * per, one.data());
    ByteTensor shifted = random_shift(one, pad, rng);
    std::copy(shifted.data(), shifted.data() + per, out.data() + s * per);
  }
  return out;
}

// Pixel scaling used everywhere before the encoder: x/255 - 0.5.
template <typename S>
Tensor<S> normalize_pixels(const ByteTensor& obs) {
  Tensor<S> out(obs.shape());
  for (int64_t i = 0; i < obs.numel(); ++i)
    out[i] = static_cast<S>(obs[i]) / S(255) - S(0.5);
  return out;
}

}  // namespace taco
