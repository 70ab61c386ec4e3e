#include "pipeline.hpp"

int main(int argc, char** argv) { return sargen::cli_main(argc, argv); }
