#include "crownacm/commands.hpp"

int main(int argc, char** argv) { return crownacm::cli::run_cli(argc, argv); }
