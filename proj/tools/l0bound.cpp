#include "l0bound/cli.hpp"

int main(int argc, char** argv)
{
    return l0bound::cli::run(argc, argv);
}
