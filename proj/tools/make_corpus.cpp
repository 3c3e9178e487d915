// Regenerates the bundled training corpus deterministically.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "cfnet/textgen.hpp"

int main(int argc, char** argv) {
  std::string path = "data/corpus.txt";
  std::size_t bytes = 512 * 1024;
  std::uint64_t seed = 20240501;
  if (argc > 1) path = argv[1];
  if (argc > 2) bytes = static_cast<std::size_t>(std::strtoull(argv[2], nullptr, 10));
  if (argc > 3) seed = std::strtoull(argv[3], nullptr, 10);

  const std::string text = cfnet::synthetic_text(bytes, seed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "cannot open " << path << "\n";
    return 1;
  }
  out << text;
  std::cout << "wrote " << text.size() << " bytes to " << path << "\n";
  return 0;
}
