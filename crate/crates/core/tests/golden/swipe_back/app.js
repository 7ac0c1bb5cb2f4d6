// generated by muit for module swipe_back
(function (root) {
  "use strict";
  var app = { module: "swipe_back", entry: "approveTask", vars: {}, entities: {}, ops: {}, screens: {} };
  app.screens["approveTask"] = {
    params: [],
    init: function ($) { },
    rules: {
    },
    views: {
    },
    handlers: {
      "approveTask__0-0:gesture:swipe:swipelefttoright": function ($, locals) { const v_target = "approveTask"; let v_touchsurface = null; $.api.history.back((-1)); },
    },
  };
  if (typeof module !== "undefined" && module.exports) module.exports = app;
  else root.muitApp = app;
})(typeof globalThis !== "undefined" ? globalThis : this);
