#include "cli_app.hpp"

int main(int argc, char** argv) { return bayesrank::cli::run_cli(argc, argv); }
