#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "minnow/cli.hpp"
#include "minnow/error.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return minnow::cli::run(std::move(args));
  } catch (const minnow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
