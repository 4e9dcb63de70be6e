#pragma once

#include "hda/adam.hpp"
#include "hda/adaptation.hpp"
#include "hda/attack.hpp"
#include "hda/dataset.hpp"
#include "hda/divergence.hpp"
#include "hda/error.hpp"
#include "hda/experiment.hpp"
#include "hda/idx.hpp"
#include "hda/matrix.hpp"
#include "hda/mlp.hpp"
#include "hda/mmd.hpp"
#include "hda/serialize.hpp"
#include "hda/training.hpp"
