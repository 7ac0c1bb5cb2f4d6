// muit page runtime: screen stack, rule evaluation, bindings, sync.
(function (root) {
  "use strict";

  function snapshot() {
    var ua = (root.navigator && root.navigator.userAgent) || "";
    var w = root.innerWidth || 0, h = root.innerHeight || 0;
    return {
      screen: {
        deviceos: /iPhone|iPad|iPod/.test(ua) ? "iOS" : /Android/.test(ua) ? "Android" : "Other",
        devicetype: Math.min(w, h) >= 600 ? "tablet" : "phone",
        window: { innerWidth: w, innerHeight: h },
        device: { orientation: w > h ? "horizontal" : "vertical" },
      },
      network: { online: !root.navigator || root.navigator.onLine !== false },
      location: { city: "", country: "" },
    };
  }

  function fields(v, out) {
    if (v === null || v === undefined) return out;
    if (typeof v === "string") out.push(v);
    else if (typeof v === "number" || typeof v === "boolean") out.push(String(v));
    else if (Array.isArray(v)) v.forEach(function (x) { fields(x, out); });
    else if (typeof v === "object") Object.keys(v).forEach(function (k) { fields(v[k], out); });
    return out;
  }

  var api = {
    iter: function (v) { return Array.isArray(v) ? v : []; },
    contains: function (items, needle) {
      items = Array.isArray(items) ? items : [];
      if (items.indexOf(needle) >= 0) return true;
      if (typeof needle !== "string") return false;
      var n = needle.toLowerCase();
      return items.some(function (x) { return fields(x, []).some(function (f) { return f.toLowerCase().indexOf(n) >= 0; }); });
    },
    exist: function (v) { return v !== null && v !== undefined; },
    select: function (v) { return v; },
    add: function (v) { state.added.push(v); },
    httpRequest: function (url) { state.effects.push({ kind: "http", url: url }); return null; },
    invoke: function (op) { state.effects.push({ kind: "invoke", operation: op, args: [].slice.call(arguments, 1) }); return null; },
    navigate: function (screen) { show(screen, true, [].slice.call(arguments, 1)); },
    history: { go: function (d) { back(d); }, back: function (d) { back(d); } },
    DateTime: {
      now: function () { return new Date().toISOString().slice(0, 19); },
      create: function (y, m, d) { return new Date(Date.UTC(y, m - 1, d)).toISOString().slice(0, 10); },
    },
    dt: {
      getYear: function (s) { return Number(String(s).slice(0, 4)); },
      getMonth: function (s) { return Number(String(s).slice(5, 7)); },
      getDate: function (s) { return Number(String(s).slice(8, 10)); },
    },
    entity: function (name) {
      return {
        from: function (x) { return Object.assign({}, state.app.entities[name], typeof x === "object" ? x : {}); },
        fromTaskList: function (x) { return Object.assign({}, state.app.entities[name], typeof x === "object" ? x : {}); },
      };
    },
  };

  var state = { app: null, boot: {}, stack: [], added: [], effects: [], queue: [], env: null };

  function env(screen) {
    return { vars: state.app.vars, s: screen.s, ctx: snapshot(), ops: state.app.ops, api: api, widget: function () { return state.app.vars; } };
  }

  function applyRules(el, spec, $) {
    el.querySelectorAll("[data-rule]").forEach(function (node) {
      var fns = spec.rules[node.id] || [];
      var pick = -1;
      for (var i = 0; i < fns.length; i++) if (fns[i]($.ctx)) { pick = i; break; }
      var old = node.querySelector(":scope > .muit-live");
      if (old) old.remove();
      var tpl = node.querySelector(':scope > template[data-branch="' + (pick >= 0 ? pick : "else") + '"]');
      if (tpl) {
        var live = document.createElement("div");
        live.className = "muit-live";
        live.appendChild(tpl.content.cloneNode(true));
        node.appendChild(live);
      }
    });
  }

  function render(screen) {
    var spec = state.app.screens[screen.name], $ = env(screen), el = document.getElementById(screen.name);
    if (!el) return;
    applyRules(el, spec, $);
    el.querySelectorAll("[id]").forEach(function (node) {
      var text = spec.views[node.id + ":text"];
      if (text) node.textContent = String(text($, {}));
      var value = spec.views[node.id + ":attr:value"];
      if (value) node.value = value($, {});
    });
    el.querySelectorAll("template[data-repeat]").forEach(function (tpl) {
      var items = spec.views[tpl.id + ":items"]($, {});
      var name = tpl.getAttribute("data-repeat");
      tpl.parentNode.querySelectorAll('[data-repeat-of="' + tpl.id + '"]').forEach(function (n) { n.remove(); });
      items.forEach(function (item, i) {
        var frag = tpl.content.cloneNode(true);
        var locals = {}; locals[name] = item;
        frag.querySelectorAll("[id]").forEach(function (n) {
          var base = n.id;
          n.id = base + ":" + i;
          var t = spec.views[base + ":text"];
          if (t) n.textContent = String(t($, locals));
          n.addEventListener("click", function () { fire(screen, base, "click", locals); });
        });
        var wrap = document.createElement("div");
        wrap.setAttribute("data-repeat-of", tpl.id);
        wrap.appendChild(frag);
        tpl.parentNode.insertBefore(wrap, tpl);
      });
    });
  }

  function fire(screen, element, event, locals) {
    var h = state.app.screens[screen.name].handlers[element + ":" + event];
    if (!h) return;
    var $ = env(screen);
    $.option = (locals || {}).option || {};
    h($, locals || {});
    render(screen);
  }

  // Calling the task's operation posts its arguments as the result.
  function wrapOps() {
    Object.keys(state.app.ops).forEach(function (name) {
      var op = state.app.ops[name];
      state.app.ops[name] = function () {
        var args = [].slice.call(arguments);
        var ret = op.apply(null, arguments);
        if (!state.boot.operation || state.boot.operation === name) submit({ op: name, args: args });
        return ret;
      };
    });
  }

  function submit(result) {
    if (!state.boot.resultUrl) return;
    state.queue.push(result);
    flush();
  }

  function flush() {
    if (!root.fetch || !state.queue.length || (root.navigator && root.navigator.onLine === false)) return;
    var item = state.queue[0];
    root.fetch(state.boot.resultUrl, { method: "POST", headers: { "content-type": "application/json" }, body: JSON.stringify(item) })
      .then(function (r) { if (r.ok || (r.status >= 400 && r.status < 500)) { state.queue.shift(); flush(); } })
      .catch(function () {});
  }

  function show(name, push, args) {
    var entry = { name: name, s: {} };
    state.app.screens[name].params.forEach(function (p, i) { entry.s[p] = (args || [])[i]; });
    state.app.screens[name].init(env(entry));
    if (push) state.stack.push(entry); else state.stack = [entry];
    render(entry);
  }

  function back(delta) {
    if (state.stack.length > 1) { state.stack.pop(); render(state.stack[state.stack.length - 1]); }
  }

  function bind(screen) {
    var el = document.getElementById(screen.name);
    if (!el) return;
    el.addEventListener("click", function (ev) {
      var node = ev.target.closest("[id]");
      if (node && node.id.indexOf(":") < 0) fire(screen, node.id, "click");
    });
    el.addEventListener("input", function (ev) {
      if (ev.target.id) fire(screen, ev.target.id, "input", { $event: { value: ev.target.value } });
    });
    var x0 = null;
    el.addEventListener("touchstart", function (ev) { x0 = ev.touches[0].clientX; });
    el.addEventListener("touchend", function (ev) {
      if (x0 === null) return;
      var dx = ev.changedTouches[0].clientX - x0;
      x0 = null;
      el.querySelectorAll(".muit-gesture").forEach(function (g) {
        var kind = g.getAttribute("data-gesture");
        Object.keys(state.app.screens[screen.name].handlers).forEach(function (k) {
          if (k.indexOf(g.id + ":gesture:" + kind + ":") !== 0) return;
          if (kind === "tap" && Math.abs(dx) < 10) fire(screen, g.id, k.slice(g.id.length + 1));
          if (kind === "swipe" && dx > 50) fire(screen, g.id, k.slice(g.id.length + 1));
        });
      });
    });
    el.addEventListener("change", function (ev) {
      var w = ev.target.closest(".muit-widget");
      if (w) fire(screen, w.id, "change", { option: { value: ev.target.value } });
    });
  }

  function start() {
    state.app = root.muitApp;
    var boot = document.getElementById("muit-bootstrap");
    state.boot = boot ? JSON.parse(boot.textContent) : {};
    if (state.boot.vars) Object.assign(state.app.vars, state.boot.vars);
    wrapOps();
    var platform = snapshot().screen.deviceos === "iOS" ? "ios" : snapshot().screen.deviceos === "Android" ? "android" : "";
    document.querySelectorAll("link[data-platform]").forEach(function (l) { l.disabled = l.getAttribute("data-platform") !== platform; });
    var name = document.body.getAttribute("data-screen");
    show(name, false);
    bind(state.stack[0]);
    root.addEventListener("online", flush);
    root.addEventListener("resize", function () { render(state.stack[state.stack.length - 1]); });
  }

  root.muit = { api: api, snapshot: snapshot, state: state, start: start };
  if (root.document) root.document.addEventListener("DOMContentLoaded", start);
})(typeof globalThis !== "undefined" ? globalThis : this);
