// Writes the procedurally generated stand-in corpora in the real on-disk
// formats (IDX and CIFAR-10 binary), for environments without the original
// datasets. See tools/fetch_datasets.sh for the real ones.

#include <CLI11.hpp>
#include <iostream>

#include "noiselab/datasets.hpp"

int main(int argc, char** argv) {
  CLI::App app{"noiselab-mkdata: generate stand-in datasets in IDX / CIFAR-10 binary formats"};
  std::string variant = "mnist";
  std::string out = "data";
  std::uint64_t seed = 7;
  long long n_train = 12000, n_test = 2000;
  app.add_option("--variant", variant, "mnist (IDX digits) | cifar10 (binary textures)");
  app.add_option("--out", out, "Output root; files land in <out>/<variant>/");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--n-train", n_train, "Training samples (IDX variant only)");
  app.add_option("--n-test", n_test, "Test samples (IDX variant only)");
  CLI11_PARSE(app, argc, argv);

  try {
    if (variant == "mnist") {
      noiselab::write_synthetic_idx_corpus(out + "/mnist", n_train, n_test, seed);
      std::cout << "wrote IDX corpus (" << n_train << "/" << n_test << ") to " << out
                << "/mnist\n";
    } else if (variant == "cifar10") {
      noiselab::write_synthetic_cifar_corpus(out + "/cifar10", seed);
      std::cout << "wrote CIFAR-10-format corpus (50000/10000) to " << out << "/cifar10\n";
    } else {
      std::cerr << "unknown variant '" << variant << "'\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
