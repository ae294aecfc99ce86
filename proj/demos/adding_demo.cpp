// Trains a small identity-initialized ReLU RNN on a short adding problem and
// prints test MSE against the predict-one baseline.
//
//   ./adding_demo [T] [updates]

#include <cstdio>
#include <cstdlib>

#include "irnn/irnn.hpp"

int main(int argc, char** argv) {
  const std::size_t T = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 20;
  const std::size_t updates = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 15000;

  irnn::Rng data_rng(7);
  const auto train = irnn::gen_adding(T, 20000, data_rng);
  const auto test = irnn::gen_adding(T, 1000, data_rng);

  irnn::ModelSpec spec;
  spec.cell = irnn::CellKind::Rnn;
  spec.activation = irnn::Activation::Relu;
  spec.hidden = 50;
  spec.input_dim = 2;
  spec.head = irnn::HeadKind::Regression;
  spec.classes = 1;

  irnn::TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.clip = 10.0;
  cfg.max_steps = updates;
  cfg.eval_every = updates / 10 ? updates / 10 : 1;

  irnn::TrainHooks hooks{[](const irnn::Metrics& m) {
    std::printf("step %6zu  train %.5f  test %.5f\n", m.step, m.train_loss, m.test_loss);
  }};
  const auto result = irnn::train(spec, cfg, train, test, hooks);
  if (result.diverged) {
    std::printf("diverged: %s\n", result.divergence_message.c_str());
    return 3;
  }
  std::printf("baseline %.5f  final %.5f\n", irnn::baseline_mse(test),
              result.history.back().test_loss);
  return 0;
}
