"""Joint (Ruelle-Taylor) resonances of commuting operators and of Anosov suspension actions.

Modules: koszul (Koszul complexes and their cohomology), jointspec (joint
eigenvalues and spectral projectors), parametrix (averaged resolvents and
resonance detection), models (suspension flows over toral automorphisms),
galerkin (anisotropic Fourier truncations), measures (Birkhoff averages,
correlations, equivariant measures).
"""

__version__ = "0.1.0"
