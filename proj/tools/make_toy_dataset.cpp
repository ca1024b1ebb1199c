// Writes the three-mesh toy dataset (tetrahedron, cube, icosahedron with
// normal-keyed ground-truth colors) used by the README walkthrough.
#include <iostream>

#include "meshtex/dataset.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_toy_dataset <output-dir>\n";
    return meshtex::kExitUsage;
  }
  try {
    meshtex::write_toy_dataset(argv[1]);
  } catch (const meshtex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return meshtex::kExitData;
  }
  std::cout << "wrote toy dataset to " << argv[1] << "\n";
  return meshtex::kExitOk;
}
