#include <iostream>

#include "app.hpp"
#include "nlvae/runtime.hpp"

int main(int argc, char** argv) {
  nlvae::tune_allocator();
  return nlvae::cli::run(argc, argv, std::cout, std::cerr);
}
