#include <iostream>

#include <CLI11.hpp>

#include "attnvlad/error.hpp"
#include "synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic query/reference tensor dataset"};
  attnvlad::synth::DatasetOptions o;
  std::string out;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--places", o.places, "number of places");
  app.add_option("--width", o.scene.width, "tensor width");
  app.add_option("--height", o.scene.height, "tensor height");
  app.add_option("--channels", o.scene.channels, "feature maps per layer");
  app.add_option("--noise", o.noise, "relative noise amplitude of references");
  app.add_option("--shift", o.max_shift, "maximum translation in cells");
  app.add_option("--seed", o.seed, "random seed");
  CLI11_PARSE(app, argc, argv);
  o.scene.margin = std::max(o.scene.margin, o.max_shift);
  try {
    attnvlad::synth::write_dataset(out, o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << o.places << " places written to " << out << "\n";
  return 0;
}
