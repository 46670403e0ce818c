#include "grpopp/cli.hpp"

int main(int argc, char** argv) { return grpopp::run_cli(argc, argv); }
