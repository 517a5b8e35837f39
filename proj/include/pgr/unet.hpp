#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgr/dataset.hpp"
#include "pgr/geodata.hpp"
#include "pgr/propagate.hpp"

namespace pgr::unet {

// CHW tensor; channel planes are contiguous row-major h x w blocks.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, T(0)) {}
  size_t plane() const { return static_cast<size_t>(h) * w; }
  T* ch(int k) { return v.data() + static_cast<size_t>(k) * plane(); }
  const T* ch(int k) const {
    return v.data() + static_cast<size_t>(k) * plane();
  }
};

// One learnable array with its gradient and Adam moments.
template <typename T>
struct ParamArray {
  std::string name;
  std::vector<int> dims;  // weights {oc, ic, kh, kw}, biases {oc}
  std::vector<T> w, g, m, v;
  size_t size() const { return w.size(); }
};

// Activations cached by forward for reuse in backward, plus scratch
// buffers; reusable across calls.
template <typename T>
struct Workspace {
  Tensor<T> x_pad;
  std::vector<Tensor<T>> enc_a, enc_b;            // post conv1/conv2 + relu
  std::vector<Tensor<T>> pool;                    // pooled stage outputs
  std::vector<std::vector<int>> pool_idx;         // argmax per pooled cell
  Tensor<T> bn_a, bn_b;
  std::vector<Tensor<T>> up_nn, up_c, cat, dec_a, dec_b;  // decoder path
  Tensor<T> out_sig;                              // padded sigmoid output
  int tile_px = 0, padded_px = 0, pad_lo = 0;
  std::vector<T> col, colt, dcol, wt;             // GEMM scratch
};

// Encoder-decoder refiner. Stage s has width base_width*2^(s-1); each
// stage runs two 3x3 convolutions with ReLU. Encoder stages end in a
// 2x2 max pool; the bottleneck has width base_width*2^stages; decoder
// stages nearest-neighbor upsample, convolve, concatenate the matching
// encoder output, and convolve twice more. A 1x1 convolution plus
// sigmoid maps to one output channel in [0, 1]. Inputs are
// reflect-padded to a multiple of 2^stages and cropped on the way out.
template <typename T>
class Model {
 public:
  static Model make(int in_channels, int base_width, int stages,
                    uint64_t seed);

  // Input (in_channels, n, n); returns the cropped (1, n, n) output.
  Tensor<T> forward(const Tensor<T>& input, Workspace<T>& ws) const;

  // d_output matches the cropped output; accumulates into gradients.
  void backward(const Tensor<T>& d_output, Workspace<T>& ws);

  void zero_grads();
  void scale_grads(T factor);
  void adam_step(double lr, double beta1, double beta2, double eps);

  std::vector<ParamArray<T>>& params() { return params_; }
  const std::vector<ParamArray<T>>& params() const { return params_; }
  int in_channels() const { return in_channels_; }
  int base_width() const { return base_width_; }
  int stages() const { return stages_; }

 private:
  int in_channels_ = 0, base_width_ = 0, stages_ = 0;
  long adam_t_ = 0;
  std::vector<ParamArray<T>> params_;
};

// Mean squared error over mask-true pixels of the normalized grids;
// d_pred (same shape as pred) gets the gradient when non-null. Throws
// domain_error when the mask is empty.
template <typename T>
double loss_masked_mse(const Tensor<T>& pred, const Tensor<T>& target,
                       const std::vector<uint8_t>& mask,
                       Tensor<T>* d_pred = nullptr);

struct NamedArray {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;
};

// Serializable snapshot of a model; arrays are float32 in a fixed
// order regardless of the training precision.
struct ModelParams {
  int in_channels = 2;
  int base_width = 32;
  int stages = 4;
  uint64_t init_seed = 0;
  int epochs_trained = 0;
  std::vector<NamedArray> arrays;
};

ModelParams init_params(uint64_t seed, int in_channels = 2,
                        int base_width = 32, int stages = 4);

template <typename T>
Model<T> model_from_params(const ModelParams& p);
template <typename T>
ModelParams params_from_model(const Model<T>& m, uint64_t init_seed,
                              int epochs_trained);

// Binary model file: magic "UNET", version byte, u32 array count, per
// array a u16-length name, u32 rank, u32 dims and float32 payload,
// then a u32-length JSON metadata blob.
void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;
  bool verbose = false;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean masked MSE per epoch
};

// Trains from a fresh seeded initialization (seed = cfg.seed).
TrainResult train(const std::vector<dataset::Sample>& samples,
                  const TrainConfig& cfg);

// Continues from existing parameters (fine-tuning keeps the arrays,
// resets the optimizer state).
TrainResult train_from(const ModelParams& start,
                       const std::vector<dataset::Sample>& samples,
                       const TrainConfig& cfg);

// Model input planes: channel 0 is the normalized coarse estimate,
// channel 1 the elevation divided by 100 m, both clamped to [0, 1] and
// zero outside their masks.
template <typename T>
Tensor<T> assemble_input(const geo::GridTile& elevation,
                         const geo::GridTile& estimate);

// Runs the model on one tile pair; the result mask is the intersection
// of the input masks and values are denormalized to dB.
prop::Heatmap predict(const ModelParams& p, const geo::GridTile& elevation,
                      const geo::GridTile& estimate);

}  // namespace pgr::unet
