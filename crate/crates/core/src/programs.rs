//! Built-in Datalog programs.

/// Transitive closure of `edge`; derives `false` on every directed cycle.
pub const TC_PROGRAM: &str = "\
edb edge 2
idb tc 2
tc(x,y) :- edge(x,y).
tc(x,y) :- tc(x,u), tc(u,y).
false :- tc(x,x).
";

/// Loops and triangles in the symmetric closure of `E`, one rule per orientation.
pub const TRIANGLE_PROGRAM: &str = "\
edb E 2
false :- E(x,x).
false :- E(x,y), E(y,z), E(z,x).
false :- E(x,y), E(y,z), E(x,z).
false :- E(x,y), E(z,y), E(z,x).
false :- E(x,y), E(z,y), E(x,z).
false :- E(y,x), E(y,z), E(z,x).
false :- E(y,x), E(y,z), E(x,z).
false :- E(y,x), E(z,y), E(z,x).
false :- E(y,x), E(z,y), E(x,z).
";
