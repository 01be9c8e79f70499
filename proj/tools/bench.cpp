#include <chrono>
#include <iostream>
#include "styleid/runtime.hpp"
#include "styleid/unet.hpp"
using namespace styleid;
int main(int argc, char** argv) {
  tune_allocator();
  UNetConfig c;
  if (argc > 1) c.base_channels = std::atoi(argv[1]);
  auto w = init_unet<float>(c, 1, {false});
  std::cout << "params " << w.parameter_count() << "\n";
  auto z = TensorF::generate({3, 64, 64}, [](Eigen::Index i) { return std::sin(i * 0.37); });
  auto t0 = std::chrono::steady_clock::now();
  int n = 10;
  for (int i = 0; i < n; ++i) unet_forward(z, 500, w);
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "forward ms " << 1000 * s / n << "\n";
  t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n; ++i) {
    ad::Tape<float> tape;
    auto p = bind_parameters(w, &tape);
    auto out = unet_forward(ad::constant(z), 500, c, p, {});
    auto loss = ad::mean_squared_error(out, ad::constant(z));
    auto g = tape.backward(loss);
  }
  s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "fwd+bwd ms " << 1000 * s / n << "\n";
}
