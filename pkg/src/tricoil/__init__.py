"""Analysis and simulation toolkit for a reconfigurable three-coil electromagnet.

The coil group has one geometric degree of freedom, the polar angle ``theta``
of every coil axis from the vertical symmetry axis. The modules follow the
offline/online pipeline:

``coilfield``   single-coil axisymmetric field model (exact loop oracle + map)
``mechanism``   planar four-bar kinematics, coil poses, collision height limit
``actuation``   actuation matrix, gradient basis, current synthesis, library
``workspace``   energy density, worst-case field capability, feasible volume
``loading``     gradient disturbance and cycle-averaged lift under rotation
``schedule``    depth-triggered theta schedule and closed-loop simulation
``config``/``libfile``/``cli``  configuration, persistence, command line
"""

import math

__version__ = "0.1.0"

#: vacuum permeability, T*m/A
MU0 = 4e-7 * math.pi
