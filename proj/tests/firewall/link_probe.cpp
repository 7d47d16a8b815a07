// Builds only when the mask-reading loader is linked. Linked against the
// training library alone it must fail with an undefined reference.
#include "wscl/data/eval_loader.hpp"

int main(int argc, char** argv) {
  if (argc < 2) return 0;
  wscl::EvalLoader loader(argv[1], 64);
  return static_cast<int>(loader.size());
}
