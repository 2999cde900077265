#include <qboost/cli.hpp>

int main(int argc, char** argv) {
  return qboost::cli::run_command(argc, argv);
}
