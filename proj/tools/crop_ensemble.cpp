#include "crop_ensemble/cli.hpp"

int main(int argc, char** argv) { return crop_ensemble::cli::dispatch(argc, argv); }
