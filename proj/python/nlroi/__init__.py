# Copyright 2026 The nlroi Authors
# SPDX-License-Identifier: Apache-2.0

"""Non-local RoI operator with a nested-loop oracle, gradient checks and weight I/O."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
